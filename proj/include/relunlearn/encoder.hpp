#pragma once

#include <cstdint>
#include <memory>
#include <string_view>

#include <Eigen/Dense>

#include "relunlearn/scene.hpp"

namespace relunlearn {

enum class Modality { kText, kImage };
enum class EmbedMode { kBase, kAdapted };

std::string_view to_string(Modality m);

struct FeatureVector {
    Eigen::VectorXd values;
    Modality modality = Modality::kText;
};

// Unit-norm output of a projection tower.
struct Embedding {
    Eigen::VectorXd values;
    Modality modality = Modality::kText;
};

// Low-rank update B*A scaled by alpha/r. B starts at zero so a fresh adapter
// leaves the projection untouched.
struct LoraAdapter {
    Eigen::MatrixXd a;  // rank x d_in
    Eigen::MatrixXd b;  // d_out x rank
    double scale = 1.0;

    int rank() const { return static_cast<int>(a.rows()); }
};

struct EncoderConfig {
    int d_in = 512;
    int d_out = 64;
    int rank = 8;
    double alpha_lora = 16.0;
    std::uint64_t seed = 2024;
    // Expected norm of W*x for a unit feature vector.
    double base_scale = 0.1;
    // Independent share of each tower's projection on top of the common one.
    double modality_gap = 0.5;
    // Norm of the per-scene Gaussian noise added to the unit scene latent.
    double image_noise = 0.5;
    double lora_init_std = 0.02;

    bool operator==(const EncoderConfig&) const = default;
};

// Deterministic stand-in for the CLIP towers' feature extractors.
//
// Text: signed feature hashing of surface unigrams and bigrams plus the
// concept unigrams and bigrams that the synonym table resolves, so that
// paraphrases share part of their signal. Image: the same concept features
// built from the scene's objects, relation and context, normalized, plus
// seeded noise and a per-style offset. Both outputs are unit length.
class Featurizer {
public:
    Featurizer(int dim, std::uint64_t seed, double image_noise);

    FeatureVector text(std::string_view caption) const;
    FeatureVector image(const SceneDescriptor& scene) const;

    int dim() const { return dim_; }

private:
    void add_feature(Eigen::VectorXd& v, std::string_view ns, std::string_view key) const;
    Eigen::VectorXd direction(std::uint64_t seed) const;

    int dim_;
    std::uint64_t seed_;
    double image_noise_;
};

struct BaseProjections {
    Eigen::MatrixXd text;   // d_out x d_in
    Eigen::MatrixXd image;  // d_out x d_in
};

struct EncoderState {
    EncoderConfig config;
    std::shared_ptr<const BaseProjections> base;  // frozen, shared between copies
    LoraAdapter lora_text;
    LoraAdapter lora_image;

    const Eigen::MatrixXd& base_weight(Modality m) const {
        return m == Modality::kText ? base->text : base->image;
    }
    const LoraAdapter& lora(Modality m) const { return m == Modality::kText ? lora_text : lora_image; }
    LoraAdapter& lora(Modality m) { return m == Modality::kText ? lora_text : lora_image; }

    Featurizer featurizer() const;
};

void validate_config(const EncoderConfig& config);

// Base weights and zero-initialized adapters, all derived from config.seed.
EncoderState make_encoder(const EncoderConfig& config);

// Same base, fresh adapters.
EncoderState reset_adapters(const EncoderState& state);

LoraAdapter init_lora(int d_in, int d_out, int rank, double alpha_lora, std::uint64_t seed, double init_std = 0.02);

Eigen::MatrixXd effective_weight(const Eigen::MatrixXd& w, const LoraAdapter& lora);

Embedding embed(const EncoderState& state, const FeatureVector& features, EmbedMode mode);

double cosine(const Embedding& a, const Embedding& b);

// Precomputed effective weights for repeated projections with one state.
class Projector {
public:
    Projector(const EncoderState& state, EmbedMode mode);

    const Eigen::MatrixXd& weight(Modality m) const { return m == Modality::kText ? text_ : image_; }

    // Raw (unnormalized) projection.
    Eigen::VectorXd project(Modality m, const Eigen::VectorXd& x) const;
    // Unit-normalized projection; throws on degenerate output.
    Eigen::VectorXd embed(Modality m, const Eigen::VectorXd& x) const;

private:
    Eigen::MatrixXd text_;
    Eigen::MatrixXd image_;
};

// Projected norms below this raise kDegenerateOutput.
inline constexpr double kMinProjectedNorm = 1e-12;

}  // namespace relunlearn
