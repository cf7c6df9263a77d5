#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relunlearn/corpus.hpp"
#include "relunlearn/encoder.hpp"
#include "relunlearn/trainer.hpp"
#include "relunlearn/unlearn_loss.hpp"

namespace relunlearn {

// One AttackSet per (attack type, tier), built exactly as generate_corpus
// builds its attack sets.
std::vector<AttackSet> build_attack_suite(const RelationGraph& graph, const CorpusConfig& config);

// Mean text/image cosine of a set of pairs under the base and adapted modes.
struct CosineComparison {
    double base_cos = 0.0;
    double optimal_cos = 0.0;
    std::size_t pairs = 0;
};

CosineComparison compare_pairs(const EncoderState& base_state, const EncoderState& adapted_state,
                               const std::vector<ExamplePair>& pairs);

// Forgetting is how far the adapted model pulled the attack pairs apart.
inline double forgetting_delta(double base_cos, double optimal_cos) { return base_cos - optimal_cos; }
inline double preservation_drift(double base_cos, double optimal_cos) { return std::abs(optimal_cos - base_cos); }

struct TierResult {
    Tier tier = Tier::kEasy;
    double base_cos = 0.0;
    double optimal_cos = 0.0;
    double delta_cos = 0.0;  // base_cos - optimal_cos
    std::size_t pairs = 0;
};

// The aggregate row is the unweighted mean over tiers.
struct AttackResult {
    AttackType attack_type = AttackType::kParaphrase;
    std::vector<TierResult> tiers;
    double base_cos = 0.0;
    double optimal_cos = 0.0;
    double delta_cos = 0.0;
};

struct ForgettingReport {
    std::vector<AttackResult> attacks;  // in AttackType order, present types only

    const AttackResult* find(AttackType t) const;
    const AttackResult& at(AttackType t) const;
};

struct PreservationRow {
    PreservationCase preservation_case = PreservationCase::kSingleNode;
    double base_cos = 0.0;
    double optimal_cos = 0.0;
    double abs_drift = 0.0;  // |optimal_cos - base_cos|
    std::size_t pairs = 0;
};

struct PreservationReport {
    std::vector<PreservationRow> rows;

    const PreservationRow* find(PreservationCase c) const;
    double mean_drift() const;
};

// `threads` caps the workers used for independent sets; 0 means hardware
// concurrency. Results do not depend on it.
ForgettingReport forgetting_eval(const EncoderState& base_state, const EncoderState& adapted_state,
                                 const std::vector<AttackSet>& attack_sets, int threads = 1);

PreservationReport preservation_eval(const EncoderState& base_state, const EncoderState& adapted_state,
                                     const std::vector<PreservationSet>& sets, int threads = 1);

// Mean over anchor pairs of |cos_adapted(t, i) - cos_base(t, i)|.
double anchor_drift(const EncoderState& base_state, const EncoderState& adapted_state,
                    const std::vector<ExamplePair>& anchors);

struct Evaluation {
    ForgettingReport forgetting;
    PreservationReport preservation;
    double anchor_drift = 0.0;
};

// Attack sets, preservation sets and held-out anchors of `corpus`.
Evaluation evaluate(const EncoderState& base_state, const EncoderState& adapted_state, const Corpus& corpus,
                    int threads = 1);

// ---------------------------------------------------------------- ablation

struct AblationVariant {
    std::string name;
    LossWeights weights;
};

// "baseline" (L3 only), "full", and "minus-l1", "minus-l2", "minus-l4",
// "minus-lc", "minus-ladv", each derived from `full`.
AblationVariant named_variant(std::string_view name, const LossWeights& full);
std::vector<std::string> variant_names();
// baseline, full, minus-lc, minus-ladv
std::vector<AblationVariant> default_variants(const LossWeights& full);

struct VariantResult {
    AblationVariant variant;
    Evaluation evaluation;
    TrainLog log;
    EncoderState state;
};

struct AblationReport {
    std::vector<VariantResult> variants;

    const VariantResult* find(std::string_view name) const;
};

// Every variant trains from `initial` with the same TrainConfig, so adapters
// and batch order start identical. Variants run on up to `threads` workers.
AblationReport ablation_run(const EncoderState& initial, const Corpus& corpus,
                            const std::vector<AblationVariant>& variants, const TrainConfig& config, int threads = 1);

// Resolves 0 to the hardware concurrency, at least 1.
int resolve_threads(int threads);

}  // namespace relunlearn
