#include "relunlearn/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "file_io.hpp"
#include "relunlearn/error.hpp"
#include "relunlearn/hashing.hpp"

namespace relunlearn {

void validate_train_config(const TrainConfig& c) {
    if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
        throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
    }
    if (c.batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
    if (c.epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be positive");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "adam betas must lie in [0, 1)");
    }
    if (!(c.adam_eps > 0.0) || !(c.weight_decay >= 0.0) || !(c.max_grad_norm >= 0.0) || !(c.lc_ceiling >= 0.0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "adam eps must be positive; weight decay, clip norm and lc ceiling non-negative");
    }
}

OptimizerState OptimizerState::fresh(const EncoderState& state) {
    return {GradientSet::zeros_like(state), GradientSet::zeros_like(state), 0};
}

FeaturePair featurize_pair(const ExamplePair& pair, const Featurizer& featurizer) {
    FeaturePair out;
    out.text = pair.text_features ? *pair.text_features : featurizer.text(pair.caption).values;
    out.image = pair.image_features ? *pair.image_features : featurizer.image(pair.scene).values;
    if (out.text.size() != static_cast<Eigen::Index>(featurizer.dim()) || out.image.size() != static_cast<Eigen::Index>(featurizer.dim())) {
        throw Error(ErrorCode::kDimensionMismatch, "features of '" + pair.caption + "' do not match encoder d_in");
    }
    return out;
}

FeaturizedCorpus featurize(const Corpus& corpus, const EncoderState& state) {
    const Featurizer f = state.featurizer();
    FeaturizedCorpus out;
    for (auto role : kAllRoles) {
        if (role == ExampleRole::kAnchor) continue;
        auto& dst = out.roles[static_cast<std::size_t>(role)];
        for (const auto& p : corpus.role(role)) dst.push_back(featurize_pair(p, f));
    }
    for (const auto& p : corpus.role(ExampleRole::kAnchor)) {
        auto fp = featurize_pair(p, f);
        out.anchors.push_back(make_anchor(state, std::move(fp.text), std::move(fp.image)));
    }
    return out;
}

std::array<bool, kNumRoles> active_roles(const LossWeights& w) {
    std::array<bool, kNumRoles> a{};
    a[static_cast<std::size_t>(ExampleRole::kL1)] = w.beta > 0.0;
    a[static_cast<std::size_t>(ExampleRole::kL2)] = w.alpha > 0.0;
    a[static_cast<std::size_t>(ExampleRole::kL3)] = true;
    a[static_cast<std::size_t>(ExampleRole::kL4)] = w.delta > 0.0;
    a[static_cast<std::size_t>(ExampleRole::kAdv)] = w.lambda_adv > 0.0;
    a[static_cast<std::size_t>(ExampleRole::kAnchor)] = w.gamma > 0.0;
    return a;
}

std::vector<BatchPlan> make_batches(const FeaturizedCorpus& corpus, int batch_size, std::uint64_t seed, int epoch,
                                    const std::array<bool, kNumRoles>& active) {
    if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
    const auto b = static_cast<std::size_t>(batch_size);
    std::size_t largest = 0;
    for (auto role : kAllRoles) {
        const std::size_t n = corpus.size(role);
        const bool is_active = active[static_cast<std::size_t>(role)];
        if (is_active && n == 0) {
            throw Error(ErrorCode::kMissingRole, "role " + std::string(to_string(role)) + " is active but has no examples");
        }
        if (is_active && n < b) {
            throw Error(ErrorCode::kBatchTooLarge,
                        "batch size " + std::to_string(batch_size) + " exceeds the " + std::to_string(n) + " examples of role " +
                            std::string(to_string(role)) + "; use a smaller batch or generate more examples");
        }
        largest = std::max(largest, n);
    }
    const std::size_t num_batches = (largest + b - 1) / b;

    std::vector<BatchPlan> plans(num_batches);
    for (auto role : kAllRoles) {
        const std::size_t n = corpus.size(role);
        if (n == 0) continue;
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(seed, std::string("batches:") + std::string(to_string(role)),
                                        static_cast<std::uint64_t>(epoch)));
        std::shuffle(perm.begin(), perm.end(), rng);
        const std::size_t take = std::min(b, n);
        for (std::size_t k = 0; k < num_batches; ++k) {
            auto& dst = plans[k].indices[static_cast<std::size_t>(role)];
            dst.reserve(take);
            for (std::size_t j = 0; j < take; ++j) dst.push_back(perm[(k * take + j) % n]);
        }
    }
    return plans;
}

LossBatch gather(const FeaturizedCorpus& corpus, const BatchPlan& plan) {
    LossBatch batch;
    auto pick = [&](ExampleRole role, std::vector<FeaturePair>& dst) {
        for (auto i : plan.indices[static_cast<std::size_t>(role)]) dst.push_back(corpus.role(role)[i]);
    };
    pick(ExampleRole::kL1, batch.l1);
    pick(ExampleRole::kL2, batch.l2);
    pick(ExampleRole::kL3, batch.l3);
    pick(ExampleRole::kL4, batch.l4);
    pick(ExampleRole::kAdv, batch.adv);
    for (auto i : plan.indices[static_cast<std::size_t>(ExampleRole::kAnchor)]) batch.anchors.push_back(corpus.anchors[i]);
    return batch;
}

void adamw_update(Eigen::MatrixXd& theta, Eigen::MatrixXd& m, Eigen::MatrixXd& v, const Eigen::MatrixXd& grad,
                  const TrainConfig& c, std::uint64_t step) {
    m = c.beta1 * m + (1.0 - c.beta1) * grad;
    v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
    const Eigen::MatrixXd m_hat = m / bc1;
    const Eigen::MatrixXd v_hat = v / bc2;
    theta -= c.learning_rate * (m_hat.array() / (v_hat.array().sqrt() + c.adam_eps) + c.weight_decay * theta.array()).matrix();
}

namespace {

std::string non_finite_terms(const LossBatch& batch, const EncoderState& state, const LossWeights& w,
                             const LossBreakdown& b) {
    std::string names;
    auto note = [&](const char* name, bool bad) {
        if (!bad) return;
        if (!names.empty()) names += ", ";
        names += name;
    };
    auto grad_bad = [&](auto&& eval) {
        try {
            return !eval().grad.all_finite();
        } catch (const Error&) {
            return true;
        }
    };
    note("L1", !std::isfinite(b.l1) || (!batch.l1.empty() && grad_bad([&] { return pull_loss(batch.l1, state); })));
    note("L2", !std::isfinite(b.l2) || (!batch.l2.empty() && grad_bad([&] { return pull_loss(batch.l2, state); })));
    note("L3", !std::isfinite(b.l3) || grad_bad([&] { return push_loss(batch.l3, state, w.push_margin); }));
    note("L4", !std::isfinite(b.l4) || (!batch.l4.empty() && grad_bad([&] { return pull_loss(batch.l4, state); })));
    note("Lc", !std::isfinite(b.lc) ||
                   (!batch.anchors.empty() && grad_bad([&] { return consistency_loss(batch.anchors, state); })));
    note("Ladv", !std::isfinite(b.ladv) ||
                     (!batch.adv.empty() && grad_bad([&] { return push_loss(batch.adv, state, w.push_margin); })));
    return names.empty() ? "unknown" : names;
}

}  // namespace

LossBreakdown step(EncoderState& state, OptimizerState& opt, const LossBatch& batch, const LossWeights& weights,
                   const TrainConfig& config) {
    for (const auto* m : {&state.lora_text.a, &state.lora_text.b, &state.lora_image.a, &state.lora_image.b}) {
        if (!m->allFinite()) throw Error(ErrorCode::kNonFinite, "adapter parameters are not finite");
    }
    TotalLoss loss = total_loss(batch, state, weights);
    if (!loss.grad.all_finite() || !std::isfinite(loss.breakdown.total)) {
        throw Error(ErrorCode::kNonFinite,
                    "non-finite loss or gradient at step " + std::to_string(opt.step + 1) + " in term(s): " +
                        non_finite_terms(batch, state, weights, loss.breakdown));
    }
    if (config.max_grad_norm > 0.0) {
        const double norm = std::sqrt(loss.grad.squared_norm());
        if (norm > config.max_grad_norm) loss.grad *= config.max_grad_norm / norm;
    }
    ++opt.step;
    adamw_update(state.lora_text.a, opt.m.a_text, opt.v.a_text, loss.grad.a_text, config, opt.step);
    adamw_update(state.lora_text.b, opt.m.b_text, opt.v.b_text, loss.grad.b_text, config, opt.step);
    adamw_update(state.lora_image.a, opt.m.a_image, opt.v.a_image, loss.grad.a_image, config, opt.step);
    adamw_update(state.lora_image.b, opt.m.b_image, opt.v.b_image, loss.grad.b_image, config, opt.step);
    return loss.breakdown;
}

TrainResult train(const EncoderState& initial, const FeaturizedCorpus& corpus, const LossWeights& weights,
                  const TrainConfig& config) {
    validate_train_config(config);
    validate_weights(weights);
    TrainResult result{initial, OptimizerState::fresh(initial), {}};
    const auto active = active_roles(weights);
    std::size_t step_index = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        for (const auto& plan : make_batches(corpus, config.batch_size, config.seed, epoch, active)) {
            LossBreakdown b = step(result.state, result.optimizer, gather(corpus, plan), weights, config);
            result.log.records.push_back({step_index++, static_cast<std::size_t>(epoch), b});
        }
        result.log.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    return result;
}

double epoch_mean(const TrainLog& log, std::size_t epoch, double LossBreakdown::*field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : log.records) {
        if (r.epoch != epoch) continue;
        sum += r.losses.*field;
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::kEmptySet, "no log records for epoch " + std::to_string(epoch));
    return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'R', 'L', 'U', 'N', 'L', 'O', 'R', 'A'};

class ByteWriter {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    void matrix(const Eigen::MatrixXd& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
        }
    }
    std::string& bytes() { return out_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string out_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    void raw(char* p, std::size_t n) {
        need(n);
        std::copy_n(bytes_.data() + pos_, n, p);
        pos_ += n;
    }
    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
        need(static_cast<std::size_t>(rows * cols) * 8);
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = f64();
        }
        return m;
    }
    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error(ErrorCode::kCorruptFile, "checkpoint is truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void write_set(ByteWriter& w, const GradientSet& g) {
    w.matrix(g.a_text);
    w.matrix(g.b_text);
    w.matrix(g.a_image);
    w.matrix(g.b_image);
}

GradientSet read_set(ByteReader& r, Eigen::Index d_in, Eigen::Index d_out, Eigen::Index rank) {
    GradientSet g;
    g.a_text = r.matrix(rank, d_in);
    g.b_text = r.matrix(d_out, rank);
    g.a_image = r.matrix(rank, d_in);
    g.b_image = r.matrix(d_out, rank);
    return g;
}

}  // namespace

std::string serialize_checkpoint(const EncoderState& state, const OptimizerState* optimizer) {
    const auto& c = state.config;
    ByteWriter w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(c.d_in));
    w.u32(static_cast<std::uint32_t>(c.d_out));
    w.u32(static_cast<std::uint32_t>(c.rank));
    w.f64(c.alpha_lora);
    w.f64(state.lora_text.scale);
    w.u64(c.seed);
    w.f64(c.base_scale);
    w.f64(c.modality_gap);
    w.f64(c.image_noise);
    w.f64(c.lora_init_std);
    w.matrix(state.lora_text.a);
    w.matrix(state.lora_text.b);
    w.matrix(state.lora_image.a);
    w.matrix(state.lora_image.b);
    w.u32(optimizer ? 1 : 0);
    if (optimizer) {
        w.u64(optimizer->step);
        write_set(w, optimizer->m);
        write_set(w, optimizer->v);
    }
    const std::uint64_t checksum = hash_string(w.bytes());
    w.u64(checksum);
    return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    ByteReader r(bytes);
    char magic[8];
    r.raw(magic, sizeof(magic));
    if (!std::equal(magic, magic + 8, kMagic)) throw Error(ErrorCode::kCorruptFile, "not a relunlearn checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::kVersionMismatch, "checkpoint version " + std::to_string(version) + " is not supported");
    }
    Checkpoint ck;
    auto& c = ck.config;
    c.d_in = static_cast<int>(r.u32());
    c.d_out = static_cast<int>(r.u32());
    c.rank = static_cast<int>(r.u32());
    c.alpha_lora = r.f64();
    const double scale = r.f64();
    c.seed = r.u64();
    c.base_scale = r.f64();
    c.modality_gap = r.f64();
    c.image_noise = r.f64();
    c.lora_init_std = r.f64();
    if (c.d_in < 1 || c.d_out < 1 || c.rank < 1 || c.rank > std::min(c.d_in, c.d_out) || c.d_in > (1 << 24) ||
        c.d_out > (1 << 24)) {
        throw Error(ErrorCode::kCorruptFile, "checkpoint header has invalid dimensions");
    }
    ck.text.a = r.matrix(c.rank, c.d_in);
    ck.text.b = r.matrix(c.d_out, c.rank);
    ck.image.a = r.matrix(c.rank, c.d_in);
    ck.image.b = r.matrix(c.d_out, c.rank);
    ck.text.scale = scale;
    ck.image.scale = scale;
    const std::uint32_t has_opt = r.u32();
    if (has_opt > 1) throw Error(ErrorCode::kCorruptFile, "checkpoint optimizer flag is invalid");
    if (has_opt == 1) {
        OptimizerState opt;
        opt.step = r.u64();
        opt.m = read_set(r, c.d_in, c.d_out, c.rank);
        opt.v = read_set(r, c.d_in, c.d_out, c.rank);
        ck.optimizer = std::move(opt);
    }
    const std::size_t payload = r.position();
    const std::uint64_t checksum = r.u64();
    if (r.remaining() != 0) throw Error(ErrorCode::kCorruptFile, "checkpoint has trailing bytes");
    if (checksum != hash_string(bytes.substr(0, payload))) {
        throw Error(ErrorCode::kCorruptFile, "checkpoint checksum mismatch");
    }
    return ck;
}

void save_checkpoint(const EncoderState& state, const std::string& path, const OptimizerState* optimizer) {
    detail::write_bytes(path, serialize_checkpoint(state, optimizer), "checkpoint");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open checkpoint '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

EncoderState restore_encoder(const Checkpoint& ck, const EncoderConfig* expected) {
    if (expected && !(*expected == ck.config)) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "checkpoint encoder (d_in=" + std::to_string(ck.config.d_in) + ", d_out=" +
                        std::to_string(ck.config.d_out) + ", rank=" + std::to_string(ck.config.rank) +
                        ") does not match the configured encoder (d_in=" + std::to_string(expected->d_in) +
                        ", d_out=" + std::to_string(expected->d_out) + ", rank=" + std::to_string(expected->rank) + ")");
    }
    EncoderState state = make_encoder(ck.config);
    state.lora_text = ck.text;
    state.lora_image = ck.image;
    return state;
}

}  // namespace relunlearn
