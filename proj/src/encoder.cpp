#include "relunlearn/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "relunlearn/error.hpp"
#include "relunlearn/hashing.hpp"
#include "relunlearn/lexicon.hpp"

namespace relunlearn {

std::string_view to_string(Modality m) { return m == Modality::kText ? "text" : "image"; }

namespace {

Eigen::MatrixXd gaussian_matrix(int rows, int cols, double stddev, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    Eigen::MatrixXd m(rows, cols);
    // Row-major fill so the draw order matches the checkpoint layout.
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

Eigen::VectorXd normalized_or_throw(const Eigen::VectorXd& v, const char* what) {
    const double n = v.norm();
    if (!(n >= kMinProjectedNorm)) {
        throw Error(ErrorCode::kDegenerateOutput, std::string(what) + " has near-zero norm");
    }
    return v / n;
}

}  // namespace

Featurizer::Featurizer(int dim, std::uint64_t seed, double image_noise)
    : dim_(dim), seed_(seed), image_noise_(image_noise) {
    if (dim < 1) throw Error(ErrorCode::kInvalidArgument, "feature dimension must be positive");
}

void Featurizer::add_feature(Eigen::VectorXd& v, std::string_view ns, std::string_view key) const {
    std::string full(ns);
    full.push_back(':');
    full += key;
    const std::uint64_t h = hash_string(full, seed_);
    const auto idx = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
    // Magnitudes vary with the hash so two colliding features of opposite
    // sign cannot cancel to an exactly zero vector.
    const double magnitude = 0.75 + 0.5 * static_cast<double>((h >> 32) & 0xFFFFF) / static_cast<double>(1 << 20);
    v[idx] += (h >> 63) ? -magnitude : magnitude;
}

Eigen::VectorXd Featurizer::direction(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = dist(rng);
    return v / v.norm();
}

FeatureVector Featurizer::text(std::string_view caption) const {
    auto tokens = tokenize(caption);
    if (tokens.empty()) throw Error(ErrorCode::kInvalidArgument, "empty caption");

    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
    std::vector<std::string> content;
    for (const auto& t : tokens) {
        if (!is_stopword(t)) content.push_back(t);
    }
    for (std::size_t i = 0; i < content.size(); ++i) {
        add_feature(v, "w", content[i]);
        if (i + 1 < content.size()) add_feature(v, "w2", content[i] + " " + content[i + 1]);
    }
    std::vector<std::string> concepts;
    for (auto& s : segment(std::span<const std::string>(tokens))) {
        if (!s.stopword) concepts.push_back(std::move(s.concept_name));
    }
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        add_feature(v, "c", concepts[i]);
        if (i + 1 < concepts.size()) add_feature(v, "c2", concepts[i] + " " + concepts[i + 1]);
    }
    if (v.squaredNorm() == 0.0) {
        throw Error(ErrorCode::kInvalidArgument, "caption '" + std::string(caption) + "' has no content tokens");
    }
    return {v / v.norm(), Modality::kText};
}

FeatureVector Featurizer::image(const SceneDescriptor& scene) const {
    if (auto problem = scene_problem(scene)) throw Error(ErrorCode::kInvalidArgument, *problem);

    // Subject, relation, then remaining objects: the order a caption names them.
    std::vector<std::string> sequence;
    auto append = [&](std::string_view label) {
        for (auto& c : concepts_of(label)) sequence.push_back(std::move(c));
    };
    append(scene.objects.front());
    if (scene.relation) append(*scene.relation);
    for (std::size_t i = 1; i < scene.objects.size(); ++i) append(scene.objects[i]);

    Eigen::VectorXd latent = Eigen::VectorXd::Zero(dim_);
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        add_feature(latent, "c", sequence[i]);
        if (i + 1 < sequence.size()) add_feature(latent, "c2", sequence[i] + " " + sequence[i + 1]);
    }
    for (const auto& tag : scene.context_tags) {
        for (const auto& c : concepts_of(tag)) add_feature(latent, "c", c);
    }
    if (latent.squaredNorm() == 0.0) throw Error(ErrorCode::kInvalidArgument, "scene has no content concepts");
    latent /= latent.norm();

    if (image_noise_ > 0.0) latent += image_noise_ * direction(derive_seed(seed_, "scene-noise", scene.noise_seed));
    const StyleInfo* style = find_style(scene.style_tag);
    if (style->strength > 0.0) {
        latent += style->strength * direction(derive_seed(seed_, std::string("style:") + std::string(style->tag)));
    }
    return {normalized_or_throw(latent, "image features"), Modality::kImage};
}

Featurizer EncoderState::featurizer() const {
    return Featurizer(config.d_in, derive_seed(config.seed, "featurizer"), config.image_noise);
}

void validate_config(const EncoderConfig& c) {
    if (c.d_in < 1 || c.d_out < 1) throw Error(ErrorCode::kInvalidArgument, "encoder dims must be positive");
    if (c.rank < 1 || c.rank > std::min(c.d_in, c.d_out)) {
        throw Error(ErrorCode::kInvalidRank, "LoRA rank " + std::to_string(c.rank) + " outside [1, min(d_in, d_out)]");
    }
    if (!(c.base_scale > 0.0) || !std::isfinite(c.base_scale)) {
        throw Error(ErrorCode::kInvalidArgument, "base_scale must be positive");
    }
    if (!(c.modality_gap >= 0.0) || !(c.image_noise >= 0.0) || !(c.lora_init_std > 0.0) ||
        !std::isfinite(c.alpha_lora)) {
        throw Error(ErrorCode::kInvalidArgument, "encoder noise/init parameters must be finite and non-negative");
    }
}

LoraAdapter init_lora(int d_in, int d_out, int rank, double alpha_lora, std::uint64_t seed, double init_std) {
    if (rank < 1 || rank > std::min(d_in, d_out)) {
        throw Error(ErrorCode::kInvalidRank, "LoRA rank " + std::to_string(rank) + " outside [1, min(d_in, d_out)]");
    }
    LoraAdapter lora;
    lora.a = gaussian_matrix(rank, d_in, init_std, seed);
    lora.b = Eigen::MatrixXd::Zero(d_out, rank);
    lora.scale = alpha_lora / rank;
    return lora;
}

EncoderState make_encoder(const EncoderConfig& config) {
    validate_config(config);
    const double rho = config.modality_gap;
    const double std = config.base_scale / std::sqrt(static_cast<double>(config.d_out));
    const double norm = 1.0 / std::sqrt(1.0 + rho * rho);

    Eigen::MatrixXd shared = gaussian_matrix(config.d_out, config.d_in, std, derive_seed(config.seed, "base-shared"));
    auto base = std::make_shared<BaseProjections>();
    base->text = norm * (shared + rho * gaussian_matrix(config.d_out, config.d_in, std, derive_seed(config.seed, "base-text")));
    base->image = norm * (shared + rho * gaussian_matrix(config.d_out, config.d_in, std, derive_seed(config.seed, "base-image")));

    EncoderState state;
    state.config = config;
    state.base = std::move(base);
    return reset_adapters(state);
}

EncoderState reset_adapters(const EncoderState& state) {
    const auto& c = state.config;
    EncoderState out;
    out.config = c;
    out.base = state.base;
    out.lora_text = init_lora(c.d_in, c.d_out, c.rank, c.alpha_lora, derive_seed(c.seed, "lora-text"), c.lora_init_std);
    out.lora_image = init_lora(c.d_in, c.d_out, c.rank, c.alpha_lora, derive_seed(c.seed, "lora-image"), c.lora_init_std);
    return out;
}

Eigen::MatrixXd effective_weight(const Eigen::MatrixXd& w, const LoraAdapter& lora) {
    if (lora.b.rows() != w.rows() || lora.a.cols() != w.cols() || lora.b.cols() != lora.a.rows()) {
        throw Error(ErrorCode::kDimensionMismatch, "LoRA factor shapes do not match the base weight");
    }
    Eigen::MatrixXd out = w;
    out.noalias() += lora.scale * (lora.b * lora.a);
    return out;
}

Projector::Projector(const EncoderState& state, EmbedMode mode) {
    if (mode == EmbedMode::kBase) {
        text_ = state.base->text;
        image_ = state.base->image;
    } else {
        text_ = effective_weight(state.base->text, state.lora_text);
        image_ = effective_weight(state.base->image, state.lora_image);
    }
}

Eigen::VectorXd Projector::project(Modality m, const Eigen::VectorXd& x) const {
    const auto& w = weight(m);
    if (x.size() != w.cols()) {
        throw Error(ErrorCode::kDimensionMismatch, "feature dimension " + std::to_string(x.size()) +
                                                       " does not match encoder d_in " + std::to_string(w.cols()));
    }
    return w * x;
}

Eigen::VectorXd Projector::embed(Modality m, const Eigen::VectorXd& x) const {
    return normalized_or_throw(project(m, x), "projected embedding");
}

Embedding embed(const EncoderState& state, const FeatureVector& features, EmbedMode mode) {
    const Modality m = features.modality;
    Eigen::VectorXd u;
    if (mode == EmbedMode::kBase) {
        const auto& w = state.base_weight(m);
        if (features.values.size() != w.cols()) {
            throw Error(ErrorCode::kDimensionMismatch, "feature dimension does not match encoder d_in");
        }
        u = w * features.values;
    } else {
        u = Projector(state, mode).project(m, features.values);
    }
    return {normalized_or_throw(u, "projected embedding"), m};
}

double cosine(const Embedding& a, const Embedding& b) {
    if (a.values.size() != b.values.size()) {
        throw Error(ErrorCode::kDimensionMismatch, "cosine of embeddings with different dimensions");
    }
    // Identical unit vectors are exactly aligned; skip the rounding of the dot product.
    if (a.values == b.values) return 1.0;
    return std::clamp(a.values.dot(b.values), -1.0, 1.0);
}

}  // namespace relunlearn
