#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "relunlearn/relation_graph.hpp"
#include "relunlearn/scene.hpp"

namespace relunlearn {

enum class ExampleRole { kL1, kL2, kL3, kL4, kAdv, kAnchor };
inline constexpr std::size_t kNumRoles = 6;
inline constexpr std::array<ExampleRole, kNumRoles> kAllRoles = {
    ExampleRole::kL1, ExampleRole::kL2, ExampleRole::kL3, ExampleRole::kL4, ExampleRole::kAdv, ExampleRole::kAnchor};

std::string_view to_string(ExampleRole role);
std::optional<ExampleRole> parse_example_role(std::string_view text);

struct ExamplePair {
    std::string caption;
    SceneDescriptor scene;
    ExampleRole role = ExampleRole::kL1;
    std::string source_element;  // graph node/edge id, "neutral:<slug>" or "external"
    // Imported pairs bypass the featurizers.
    std::optional<Eigen::VectorXd> text_features;
    std::optional<Eigen::VectorXd> image_features;

    bool operator==(const ExamplePair& other) const;
    // Identity used for train/eval disjointness: caption plus scene.
    bool same_example(const ExamplePair& other) const {
        return caption == other.caption && scene == other.scene;
    }
};

enum class AttackType { kParaphrase, kContextual, kOodImage };
enum class Tier { kEasy, kMedium, kHard };
inline constexpr std::array<AttackType, 3> kAllAttacks = {AttackType::kParaphrase, AttackType::kContextual,
                                                          AttackType::kOodImage};
inline constexpr std::array<Tier, 3> kAllTiers = {Tier::kEasy, Tier::kMedium, Tier::kHard};

std::string_view to_string(AttackType t);
std::string_view display_name(AttackType t);  // "Paraphrase", "Contextual", "OOD Image"
std::string_view to_string(Tier t);
std::optional<AttackType> parse_attack_type(std::string_view text);
std::optional<Tier> parse_tier(std::string_view text);

struct AttackSet {
    AttackType attack_type = AttackType::kParaphrase;
    Tier tier = Tier::kEasy;
    std::vector<ExamplePair> pairs;

    bool operator==(const AttackSet&) const = default;
};

enum class PreservationCase { kSingleNode, kNewSafeEdge, kNewSafeNode, kNewNeutralEdge };
inline constexpr std::array<PreservationCase, 4> kAllPreservationCases = {
    PreservationCase::kSingleNode, PreservationCase::kNewSafeEdge, PreservationCase::kNewSafeNode,
    PreservationCase::kNewNeutralEdge};

std::string_view to_string(PreservationCase c);
std::string_view display_name(PreservationCase c);  // "Single Node Preservation", ...
std::optional<PreservationCase> parse_preservation_case(std::string_view text);

struct PreservationSet {
    PreservationCase preservation_case = PreservationCase::kSingleNode;
    std::vector<ExamplePair> pairs;

    bool operator==(const PreservationSet&) const = default;
};

struct RoleCounts {
    int l1 = 1024;
    int l2 = 1024;
    int l3 = 1024;
    int l4 = 1024;
    int adv = 1024;
    int anchor = 1024;

    int get(ExampleRole role) const;
    void set(ExampleRole role, int value);
    bool operator==(const RoleCounts&) const = default;
};

struct CorpusConfig {
    std::uint64_t seed = 7;
    RoleCounts counts;
    int eval_per_set = 24;
    // Roles the loss will read; an active role with a zero count is an error.
    std::array<bool, kNumRoles> active = {true, true, true, true, true, true};
    // Registered neutral concepts for L4 on top of the graph's neutral edges.
    std::vector<Triple> neutral_concepts;
    // Held-out neutral pairs for the new-neutral-edge preservation case.
    std::vector<Triple> eval_neutral_concepts;
    std::vector<std::string> train_contexts;
    std::array<std::string, 3> eval_contexts;  // easy, medium, hard
    std::array<std::string, 3> eval_styles;    // easy, medium, hard

    CorpusConfig();
    bool is_active(ExampleRole role) const { return active[static_cast<std::size_t>(role)]; }
    bool operator==(const CorpusConfig&) const = default;
};

struct Corpus {
    std::array<std::vector<ExamplePair>, kNumRoles> train;
    std::vector<AttackSet> attacks;
    std::vector<PreservationSet> preservation;
    std::vector<ExamplePair> eval_anchors;

    const std::vector<ExamplePair>& role(ExampleRole r) const { return train[static_cast<std::size_t>(r)]; }
    std::vector<ExamplePair>& role(ExampleRole r) { return train[static_cast<std::size_t>(r)]; }
    const AttackSet* find_attack(AttackType t, Tier tier) const;
    const PreservationSet* find_preservation(PreservationCase c) const;

    bool operator==(const Corpus&) const = default;
};

// "a kid eating a hamburger"
std::string describe(const Triple& t);

// Scene of an object-relation-object tuple, photo style, no context.
SceneDescriptor tuple_scene(const Triple& t, std::uint64_t noise_seed = 0);

Corpus generate_corpus(const RelationGraph& graph, const CorpusConfig& config);

// The eval-only attack sets for a graph: paraphrase (one, two, all synonym
// substitutions), contextual (config.eval_contexts) and OOD image
// (config.eval_styles), one set per (attack type, tier).
std::vector<AttackSet> generate_attack_sets(const RelationGraph& graph, const CorpusConfig& config);

// n distinct paraphrases by seeded synonym substitution of every lexicon
// phrase, occasionally wrapped in a caption template. The first variant uses
// the primary synonym of each phrase. Never returns the input caption.
std::vector<std::string> paraphrase_variants(std::string_view caption, int n, std::uint64_t seed);

// Same, but substituting exactly `substitutions` phrases (all when negative)
// and skipping any caption in `exclude`.
std::vector<std::string> paraphrase_variants(std::string_view caption, int n, std::uint64_t seed, int substitutions,
                                             bool primary_first, const std::vector<std::string>& exclude = {});

// Places the pair's caption in a registered context and adds the context to its scene.
ExamplePair contextual_variant(const ExamplePair& pair, std::string_view context_tag, std::uint64_t seed);

// Same scene rendered in another registered style.
SceneDescriptor ood_scene(const SceneDescriptor& scene, std::string_view style_tag);

// Eval pairs that also occur in a training role (should be empty).
std::vector<std::string> disjointness_violations(const Corpus& corpus);

// Line-oriented embedding manifest; vectors are encoder input features.
//   relunlearn-embeddings v1 dim=<d>
//   <role>\t<caption>\t<text_vec>\t<image_vec>
// Vectors are space-separated shortest round-trip decimals; tabs, newlines
// and backslashes in captions are escaped.
std::string emit_embedding_manifest(const std::vector<ExamplePair>& pairs, int dim);
Corpus parse_embedding_manifest(std::string_view text, int expected_dim);
Corpus import_manifest(const std::string& path, int expected_dim);

// Whole-corpus manifest (JSON), including eval sets and imported vectors.
std::string emit_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view text);

}  // namespace relunlearn
