#include "relunlearn/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "relunlearn/error.hpp"

namespace relunlearn {

int resolve_threads(int threads) {
    if (threads < 0) throw Error(ErrorCode::kInvalidArgument, "thread count must not be negative");
    if (threads == 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(threads, 1);
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index writes its
// own slot, so results do not depend on scheduling. The first exception wins.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(resolve_threads(threads)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

void check_compatible(const EncoderState& base_state, const EncoderState& adapted_state) {
    if (!(base_state.config == adapted_state.config)) {
        throw Error(ErrorCode::kDimensionMismatch, "base and adapted encoders were built from different configs");
    }
}

}  // namespace

std::vector<AttackSet> build_attack_suite(const RelationGraph& graph, const CorpusConfig& config) {
    return generate_attack_sets(graph, config);
}

CosineComparison compare_pairs(const EncoderState& base_state, const EncoderState& adapted_state,
                               const std::vector<ExamplePair>& pairs) {
    check_compatible(base_state, adapted_state);
    if (pairs.empty()) throw Error(ErrorCode::kEmptySet, "cannot compare an empty set of pairs");
    const Featurizer f = base_state.featurizer();
    const Projector base(base_state, EmbedMode::kBase);
    const Projector adapted(adapted_state, EmbedMode::kAdapted);
    CosineComparison out;
    for (const auto& p : pairs) {
        const FeaturePair x = featurize_pair(p, f);
        out.base_cos += std::clamp(base.embed(Modality::kText, x.text).dot(base.embed(Modality::kImage, x.image)), -1.0, 1.0);
        out.optimal_cos +=
            std::clamp(adapted.embed(Modality::kText, x.text).dot(adapted.embed(Modality::kImage, x.image)), -1.0, 1.0);
    }
    out.pairs = pairs.size();
    out.base_cos /= static_cast<double>(pairs.size());
    out.optimal_cos /= static_cast<double>(pairs.size());
    return out;
}

const AttackResult* ForgettingReport::find(AttackType t) const {
    for (const auto& a : attacks) {
        if (a.attack_type == t) return &a;
    }
    return nullptr;
}

const AttackResult& ForgettingReport::at(AttackType t) const {
    if (const auto* a = find(t)) return *a;
    throw Error(ErrorCode::kEmptySet, "report has no " + std::string(to_string(t)) + " attack");
}

const PreservationRow* PreservationReport::find(PreservationCase c) const {
    for (const auto& r : rows) {
        if (r.preservation_case == c) return &r;
    }
    return nullptr;
}

double PreservationReport::mean_drift() const {
    if (rows.empty()) throw Error(ErrorCode::kEmptySet, "preservation report has no rows");
    double sum = 0.0;
    for (const auto& r : rows) sum += r.abs_drift;
    return sum / static_cast<double>(rows.size());
}

ForgettingReport forgetting_eval(const EncoderState& base_state, const EncoderState& adapted_state,
                                 const std::vector<AttackSet>& attack_sets, int threads) {
    check_compatible(base_state, adapted_state);
    if (attack_sets.empty()) throw Error(ErrorCode::kEmptySet, "no attack sets to evaluate");
    for (const auto& s : attack_sets) {
        if (s.pairs.empty()) {
            throw Error(ErrorCode::kEmptySet, "attack set " + std::string(to_string(s.attack_type)) + "/" +
                                                  std::string(to_string(s.tier)) + " is empty");
        }
    }
    std::vector<CosineComparison> results(attack_sets.size());
    parallel_for(attack_sets.size(), threads,
                 [&](std::size_t i) { results[i] = compare_pairs(base_state, adapted_state, attack_sets[i].pairs); });

    ForgettingReport report;
    for (auto type : kAllAttacks) {
        AttackResult a;
        a.attack_type = type;
        for (auto tier : kAllTiers) {
            for (std::size_t i = 0; i < attack_sets.size(); ++i) {
                if (attack_sets[i].attack_type != type || attack_sets[i].tier != tier) continue;
                const auto& r = results[i];
                a.tiers.push_back({tier, r.base_cos, r.optimal_cos, forgetting_delta(r.base_cos, r.optimal_cos), r.pairs});
            }
        }
        if (a.tiers.empty()) continue;
        for (const auto& t : a.tiers) {
            a.base_cos += t.base_cos;
            a.optimal_cos += t.optimal_cos;
        }
        a.base_cos /= static_cast<double>(a.tiers.size());
        a.optimal_cos /= static_cast<double>(a.tiers.size());
        a.delta_cos = forgetting_delta(a.base_cos, a.optimal_cos);
        report.attacks.push_back(std::move(a));
    }
    return report;
}

PreservationReport preservation_eval(const EncoderState& base_state, const EncoderState& adapted_state,
                                     const std::vector<PreservationSet>& sets, int threads) {
    check_compatible(base_state, adapted_state);
    if (sets.empty()) throw Error(ErrorCode::kEmptySet, "no preservation sets to evaluate");
    for (const auto& s : sets) {
        if (s.pairs.empty()) {
            throw Error(ErrorCode::kEmptySet,
                        "preservation set " + std::string(to_string(s.preservation_case)) + " is empty");
        }
    }
    std::vector<CosineComparison> results(sets.size());
    parallel_for(sets.size(), threads,
                 [&](std::size_t i) { results[i] = compare_pairs(base_state, adapted_state, sets[i].pairs); });

    PreservationReport report;
    for (auto c : kAllPreservationCases) {
        for (std::size_t i = 0; i < sets.size(); ++i) {
            if (sets[i].preservation_case != c) continue;
            const auto& r = results[i];
            report.rows.push_back({c, r.base_cos, r.optimal_cos, preservation_drift(r.base_cos, r.optimal_cos), r.pairs});
        }
    }
    return report;
}

double anchor_drift(const EncoderState& base_state, const EncoderState& adapted_state,
                    const std::vector<ExamplePair>& anchors) {
    check_compatible(base_state, adapted_state);
    if (anchors.empty()) throw Error(ErrorCode::kEmptySet, "no anchors to measure drift on");
    const Featurizer f = base_state.featurizer();
    const Projector base(base_state, EmbedMode::kBase);
    const Projector adapted(adapted_state, EmbedMode::kAdapted);
    double sum = 0.0;
    for (const auto& p : anchors) {
        const FeaturePair x = featurize_pair(p, f);
        const double b = base.embed(Modality::kText, x.text).dot(base.embed(Modality::kImage, x.image));
        const double a = adapted.embed(Modality::kText, x.text).dot(adapted.embed(Modality::kImage, x.image));
        sum += std::abs(std::clamp(a, -1.0, 1.0) - std::clamp(b, -1.0, 1.0));
    }
    return sum / static_cast<double>(anchors.size());
}

Evaluation evaluate(const EncoderState& base_state, const EncoderState& adapted_state, const Corpus& corpus,
                    int threads) {
    Evaluation e;
    e.forgetting = forgetting_eval(base_state, adapted_state, corpus.attacks, threads);
    e.preservation = preservation_eval(base_state, adapted_state, corpus.preservation, threads);
    e.anchor_drift = anchor_drift(base_state, adapted_state, corpus.eval_anchors);
    return e;
}

// ---------------------------------------------------------------- ablation

std::vector<std::string> variant_names() {
    return {"baseline", "full", "minus-l1", "minus-l2", "minus-l4", "minus-lc", "minus-ladv"};
}

AblationVariant named_variant(std::string_view name, const LossWeights& full) {
    AblationVariant v{std::string(name), full};
    if (name == "full") return v;
    if (name == "baseline") {
        v.weights.alpha = v.weights.beta = v.weights.delta = v.weights.gamma = v.weights.lambda_adv = 0.0;
    } else if (name == "minus-l1") {
        v.weights.beta = 0.0;
    } else if (name == "minus-l2") {
        v.weights.alpha = 0.0;
    } else if (name == "minus-l4") {
        v.weights.delta = 0.0;
    } else if (name == "minus-lc") {
        v.weights.gamma = 0.0;
    } else if (name == "minus-ladv") {
        v.weights.lambda_adv = 0.0;
    } else {
        std::string known;
        for (const auto& n : variant_names()) known += (known.empty() ? "" : ", ") + n;
        throw Error(ErrorCode::kInvalidArgument, "unknown ablation variant '" + std::string(name) + "' (known: " + known + ")");
    }
    return v;
}

std::vector<AblationVariant> default_variants(const LossWeights& full) {
    return {named_variant("baseline", full), named_variant("full", full), named_variant("minus-lc", full),
            named_variant("minus-ladv", full)};
}

const VariantResult* AblationReport::find(std::string_view name) const {
    for (const auto& v : variants) {
        if (v.variant.name == name) return &v;
    }
    return nullptr;
}

AblationReport ablation_run(const EncoderState& initial, const Corpus& corpus,
                            const std::vector<AblationVariant>& variants, const TrainConfig& config, int threads) {
    if (variants.empty()) throw Error(ErrorCode::kEmptySet, "no ablation variants requested");
    for (std::size_t i = 0; i < variants.size(); ++i) {
        validate_weights(variants[i].weights);
        for (std::size_t j = 0; j < i; ++j) {
            if (variants[i].name == variants[j].name) {
                throw Error(ErrorCode::kInvalidArgument, "ablation variant '" + variants[i].name + "' listed twice");
            }
        }
    }
    validate_train_config(config);
    const FeaturizedCorpus features = featurize(corpus, initial);
    const EncoderState base = reset_adapters(initial);

    std::vector<std::optional<VariantResult>> slots(variants.size());
    parallel_for(variants.size(), threads, [&](std::size_t i) {
        try {
            TrainResult r = train(initial, features, variants[i].weights, config);
            Evaluation e = evaluate(base, r.state, corpus);
            slots[i] = VariantResult{variants[i], std::move(e), std::move(r.log), std::move(r.state)};
        } catch (const Error& err) {
            throw Error(err.code(), "variant '" + variants[i].name + "': " + err.what());
        }
    });
    AblationReport report;
    for (auto& s : slots) report.variants.push_back(std::move(*s));
    return report;
}

}  // namespace relunlearn
