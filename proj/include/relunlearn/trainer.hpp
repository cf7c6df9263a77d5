#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relunlearn/corpus.hpp"
#include "relunlearn/encoder.hpp"
#include "relunlearn/unlearn_loss.hpp"

namespace relunlearn {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;  // pairs per role per step
    int epochs = 3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    std::uint64_t seed = 7;
    double max_grad_norm = 0.0;  // 0 disables clipping
    // Last-epoch mean Lc above this is reported as a consistency failure.
    double lc_ceiling = 0.05;

    bool operator==(const TrainConfig&) const = default;
};

void validate_train_config(const TrainConfig& config);

// AdamW moments, shaped like the adapters.
struct OptimizerState {
    GradientSet m;
    GradientSet v;
    std::uint64_t step = 0;

    static OptimizerState fresh(const EncoderState& state);
};

// Encoder inputs for every training role, with anchor base embeddings cached.
struct FeaturizedCorpus {
    std::array<std::vector<FeaturePair>, kNumRoles> roles;
    std::vector<AnchorExample> anchors;

    const std::vector<FeaturePair>& role(ExampleRole r) const { return roles[static_cast<std::size_t>(r)]; }
    std::size_t size(ExampleRole r) const {
        return r == ExampleRole::kAnchor ? anchors.size() : role(r).size();
    }
};

FeaturePair featurize_pair(const ExamplePair& pair, const Featurizer& featurizer);
FeaturizedCorpus featurize(const Corpus& corpus, const EncoderState& state);

// Roles whose loss weight is positive; L3 always.
std::array<bool, kNumRoles> active_roles(const LossWeights& weights);

struct BatchPlan {
    std::array<std::vector<std::size_t>, kNumRoles> indices;
};

// One slice per non-empty role in every batch. Each role is shuffled per
// (seed, epoch) and cycled so the largest role is covered once per epoch.
std::vector<BatchPlan> make_batches(const FeaturizedCorpus& corpus, int batch_size, std::uint64_t seed, int epoch,
                                    const std::array<bool, kNumRoles>& active);

LossBatch gather(const FeaturizedCorpus& corpus, const BatchPlan& plan);

// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
void adamw_update(Eigen::MatrixXd& theta, Eigen::MatrixXd& m, Eigen::MatrixXd& v, const Eigen::MatrixXd& grad,
                  const TrainConfig& config, std::uint64_t step);

// One optimizer step on the adapters. The base projections are never touched.
LossBreakdown step(EncoderState& state, OptimizerState& opt, const LossBatch& batch, const LossWeights& weights,
                   const TrainConfig& config);

struct TrainLog {
    std::vector<LossRecord> records;
    std::vector<double> epoch_seconds;
};

struct TrainResult {
    EncoderState state;
    OptimizerState optimizer;
    TrainLog log;
};

TrainResult train(const EncoderState& initial, const FeaturizedCorpus& corpus, const LossWeights& weights,
                  const TrainConfig& config);

// Mean of a loss column over the records of one epoch.
double epoch_mean(const TrainLog& log, std::size_t epoch, double LossBreakdown::*field);

// ---------------------------------------------------------------- checkpoints
//
// Binary, little-endian, version 1:
//   char[8]  magic "RLUNLORA"
//   u32      version
//   u32      d_in, d_out, rank
//   f64      alpha_lora, scale
//   u64      seed
//   f64      base_scale, modality_gap, image_noise, lora_init_std
//   f64[]    text A (rank x d_in), text B (d_out x rank),
//            image A, image B; each row-major
//   u32      has_optimizer
//   [u64 step, then m and v for the four factors in the order above]
//   u64      FNV-1a of every preceding byte

struct Checkpoint {
    EncoderConfig config;
    LoraAdapter text;
    LoraAdapter image;
    std::optional<OptimizerState> optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const EncoderState& state, const OptimizerState* optimizer = nullptr);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const EncoderState& state, const std::string& path, const OptimizerState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the frozen base from the header and installs the stored adapters.
// With `expected`, any config difference is a kDimensionMismatch error.
EncoderState restore_encoder(const Checkpoint& checkpoint, const EncoderConfig* expected = nullptr);

}  // namespace relunlearn
