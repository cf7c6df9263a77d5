#include "relunlearn/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relunlearn/error.hpp"
#include "relunlearn/hashing.hpp"
#include "relunlearn/lexicon.hpp"

namespace relunlearn {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------- enum names

std::string_view to_string(ExampleRole role) {
    switch (role) {
        case ExampleRole::kL1: return "L1";
        case ExampleRole::kL2: return "L2";
        case ExampleRole::kL3: return "L3";
        case ExampleRole::kL4: return "L4";
        case ExampleRole::kAdv: return "adv";
        case ExampleRole::kAnchor: return "anchor";
    }
    return "L1";
}

std::optional<ExampleRole> parse_example_role(std::string_view text) {
    for (auto r : kAllRoles) {
        if (to_string(r) == text) return r;
    }
    return std::nullopt;
}

std::string_view to_string(AttackType t) {
    switch (t) {
        case AttackType::kParaphrase: return "paraphrase";
        case AttackType::kContextual: return "contextual";
        case AttackType::kOodImage: return "ood_image";
    }
    return "paraphrase";
}

std::string_view display_name(AttackType t) {
    switch (t) {
        case AttackType::kParaphrase: return "Paraphrase";
        case AttackType::kContextual: return "Contextual";
        case AttackType::kOodImage: return "OOD Image";
    }
    return "Paraphrase";
}

std::string_view to_string(Tier t) {
    switch (t) {
        case Tier::kEasy: return "easy";
        case Tier::kMedium: return "medium";
        case Tier::kHard: return "hard";
    }
    return "easy";
}

std::optional<AttackType> parse_attack_type(std::string_view text) {
    for (auto t : kAllAttacks) {
        if (to_string(t) == text) return t;
    }
    return std::nullopt;
}

std::optional<Tier> parse_tier(std::string_view text) {
    for (auto t : kAllTiers) {
        if (to_string(t) == text) return t;
    }
    return std::nullopt;
}

std::string_view to_string(PreservationCase c) {
    switch (c) {
        case PreservationCase::kSingleNode: return "single_node";
        case PreservationCase::kNewSafeEdge: return "new_safe_edge";
        case PreservationCase::kNewSafeNode: return "new_safe_node";
        case PreservationCase::kNewNeutralEdge: return "new_neutral_edge";
    }
    return "single_node";
}

std::string_view display_name(PreservationCase c) {
    switch (c) {
        case PreservationCase::kSingleNode: return "Single Node Preservation";
        case PreservationCase::kNewSafeEdge: return "New Safe Edge";
        case PreservationCase::kNewSafeNode: return "New Safe Node";
        case PreservationCase::kNewNeutralEdge: return "New Neutral Edge";
    }
    return "Single Node Preservation";
}

std::optional<PreservationCase> parse_preservation_case(std::string_view text) {
    for (auto c : kAllPreservationCases) {
        if (to_string(c) == text) return c;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------- value types

namespace {

bool same_vector(const std::optional<Eigen::VectorXd>& a, const std::optional<Eigen::VectorXd>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    if (a->size() != b->size()) return false;
    for (Eigen::Index i = 0; i < a->size(); ++i) {
        if ((*a)[i] != (*b)[i]) return false;
    }
    return true;
}

}  // namespace

bool ExamplePair::operator==(const ExamplePair& other) const {
    return caption == other.caption && scene == other.scene && role == other.role &&
           source_element == other.source_element && same_vector(text_features, other.text_features) &&
           same_vector(image_features, other.image_features);
}

int RoleCounts::get(ExampleRole role) const {
    switch (role) {
        case ExampleRole::kL1: return l1;
        case ExampleRole::kL2: return l2;
        case ExampleRole::kL3: return l3;
        case ExampleRole::kL4: return l4;
        case ExampleRole::kAdv: return adv;
        case ExampleRole::kAnchor: return anchor;
    }
    return 0;
}

void RoleCounts::set(ExampleRole role, int value) {
    switch (role) {
        case ExampleRole::kL1: l1 = value; break;
        case ExampleRole::kL2: l2 = value; break;
        case ExampleRole::kL3: l3 = value; break;
        case ExampleRole::kL4: l4 = value; break;
        case ExampleRole::kAdv: adv = value; break;
        case ExampleRole::kAnchor: anchor = value; break;
    }
}

CorpusConfig::CorpusConfig()
    : neutral_concepts{{"dog", "chasing", "ball"},         {"woman", "reading", "book"},
                       {"man", "riding", "bicycle"},       {"cat", "sleeping on", "sofa"},
                       {"girl", "flying", "kite"},         {"chef", "cutting", "vegetables"},
                       {"farmer", "driving", "tractor"},   {"musician", "playing", "guitar"}},
      eval_neutral_concepts{{"people", "drinking", "coffee"}, {"tourist", "photographing", "eiffel tower"}},
      train_contexts{"park", "kitchen table", "school cafeteria", "sunny backyard"},
      eval_contexts{"beach", "crowded birthday party", "futuristic city street at night"},
      eval_styles{"sketch", "watercolor", "van-gogh"} {}

const AttackSet* Corpus::find_attack(AttackType t, Tier tier) const {
    for (const auto& a : attacks) {
        if (a.attack_type == t && a.tier == tier) return &a;
    }
    return nullptr;
}

const PreservationSet* Corpus::find_preservation(PreservationCase c) const {
    for (const auto& p : preservation) {
        if (p.preservation_case == c) return &p;
    }
    return nullptr;
}

// ---------------------------------------------------------------- captions

namespace {

const std::set<std::string_view>& mass_nouns() {
    static const std::set<std::string_view> kMass = {"people", "coffee", "wine", "vegetables", "friends",
                                                      "water", "tea", "juice", "coworkers"};
    return kMass;
}

std::string noun_phrase(std::string_view label, std::string_view adjective = {}) {
    std::string core = adjective.empty() ? std::string(label) : std::string(adjective) + " " + std::string(label);
    if (mass_nouns().contains(label)) return core;
    if (label == "eiffel tower") return "the " + core;
    auto first = tokenize(core);
    return std::string(indefinite_article(first.empty() ? std::string_view{} : std::string_view(first.front()))) +
           " " + core;
}

std::string bare_description(const Triple& t) {
    return std::string(t.subject) + " " + t.relation + " " + noun_phrase(t.object);
}

std::string apply_template(std::string_view tmpl, std::string_view core) {
    std::string out(tmpl);
    auto pos = out.find("{}");
    if (pos != std::string::npos) out.replace(pos, 2, core);
    return out;
}

const std::vector<std::string_view> kTrainTemplates = {"{}", "a photo of {}", "{} in a picture", "there is {}"};
const std::vector<std::string_view> kEvalTemplates = {"an image of {}", "a snapshot of {}", "{}, captured on camera"};
const std::vector<std::string_view> kAnchorTemplates = {"a close up of {}", "{} today"};
const std::vector<std::string_view> kEvalAnchorTemplates = {"a quick glimpse of {}", "{} seen from afar"};
const std::vector<std::string_view> kParaphraseWrappers = {"picture of {}", "{} in the photo", "look at {}"};
const std::vector<std::string_view> kContextTemplates = {"{c} {p}", "{p}, {c}", "{c}, {p}"};
const std::vector<std::string_view> kTrainAdjectives = {"lovely", "small", "bright", "big", "cute", "nice"};
const std::vector<std::string_view> kEvalAdjectives = {"happy", "delicious", "smiling", "fresh", "stunning", "tasty"};

}  // namespace

std::string describe(const Triple& t) { return noun_phrase(t.subject) + " " + t.relation + " " + noun_phrase(t.object); }

SceneDescriptor tuple_scene(const Triple& t, std::uint64_t noise_seed) {
    SceneDescriptor s;
    s.objects = {t.subject, t.object};
    s.relation = t.relation;
    s.noise_seed = noise_seed;
    return s;
}

// ---------------------------------------------------------------- paraphrase

namespace {

std::string substitute_primary(const Segment& seg) {
    const ConceptEntry* entry = find_concept(seg.concept_name);
    const std::string primary(entry->synonyms.front());
    return seg.surface == primary ? std::string(entry->name) : primary;
}

std::vector<std::string> alternatives(const Segment& seg) {
    std::vector<std::string> out;
    const ConceptEntry* entry = find_concept(seg.concept_name);
    if (seg.surface != entry->name) out.emplace_back(entry->name);
    for (auto syn : entry->synonyms) {
        if (seg.surface != syn) out.emplace_back(syn);
    }
    return out;
}

// Up to n paraphrases; fewer only when the candidate space runs dry.
std::vector<std::string> collect_paraphrases(std::string_view caption, int n, std::uint64_t seed, int substitutions,
                                             bool primary_first, const std::vector<std::string>& exclude) {
    const auto segs = segment(caption);
    const std::string original = join_segments(segs);
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (segs[i].in_lexicon && find_concept(segs[i].concept_name)) slots.push_back(i);
    }
    const std::size_t k =
        substitutions < 0 ? slots.size() : std::min(slots.size(), static_cast<std::size_t>(substitutions));

    std::set<std::string> seen(exclude.begin(), exclude.end());
    seen.insert(std::string(caption));
    seen.insert(original);
    std::vector<std::string> out;
    auto accept = [&](std::string candidate) {
        if (!seen.insert(candidate).second) return false;
        out.push_back(std::move(candidate));
        return true;
    };

    if (primary_first && k > 0) {
        auto variant = segs;
        for (std::size_t j = 0; j < k; ++j) variant[slots[j]].surface = substitute_primary(segs[slots[j]]);
        accept(join_segments(variant));
    }

    std::mt19937_64 rng(derive_seed(seed, "paraphrase"));
    // Candidates run dry long before any fixed budget on small synonym sets,
    // so give up after a run of rejects instead.
    constexpr int kForceWrapAfter = 200;
    constexpr int kGiveUpAfter = 600;
    for (int stall = 0; stall < kGiveUpAfter && static_cast<int>(out.size()) < n;) {
        auto variant = segs;
        auto chosen = slots;
        std::shuffle(chosen.begin(), chosen.end(), rng);
        chosen.resize(k);
        for (auto idx : chosen) {
            auto alts = alternatives(segs[idx]);
            std::uniform_int_distribution<std::size_t> pick(0, alts.size() - 1);
            variant[idx].surface = alts[pick(rng)];
        }
        std::string text = join_segments(variant);
        // Wrap roughly one in four, and always once substitutions are exhausted.
        std::uniform_int_distribution<int> coin(0, 3);
        if (k == 0 || coin(rng) == 0 || stall > kForceWrapAfter) {
            std::uniform_int_distribution<std::size_t> w(0, kParaphraseWrappers.size() - 1);
            text = join_segments(segment(apply_template(kParaphraseWrappers[w(rng)], text)));
        }
        stall = accept(std::move(text)) ? 0 : stall + 1;
    }
    if (static_cast<int>(out.size()) > n) out.resize(static_cast<std::size_t>(n));
    return out;
}

}  // namespace

std::vector<std::string> paraphrase_variants(std::string_view caption, int n, std::uint64_t seed, int substitutions,
                                             bool primary_first, const std::vector<std::string>& exclude) {
    if (n < 1) throw Error(ErrorCode::kInvalidArgument, "paraphrase count must be at least 1");
    if (tokenize(caption).empty()) throw Error(ErrorCode::kInvalidArgument, "empty caption");
    auto out = collect_paraphrases(caption, n, seed, substitutions, primary_first, exclude);
    if (static_cast<int>(out.size()) < n) {
        throw Error(ErrorCode::kInvalidArgument, "could only produce " + std::to_string(out.size()) +
                                                     " distinct paraphrases of '" + std::string(caption) + "'");
    }
    return out;
}

std::vector<std::string> paraphrase_variants(std::string_view caption, int n, std::uint64_t seed) {
    return paraphrase_variants(caption, n, seed, -1, true);
}

ExamplePair contextual_variant(const ExamplePair& pair, std::string_view context_tag, std::uint64_t seed) {
    const ContextInfo* ctx = find_context(context_tag);
    if (!ctx) throw Error(ErrorCode::kUnknownTag, "unknown context tag '" + std::string(context_tag) + "'");
    const std::string phrase = context_phrase(*ctx);
    std::string_view tmpl = kContextTemplates[seed % kContextTemplates.size()];
    std::string caption(tmpl);
    caption.replace(caption.find("{c}"), 3, pair.caption);
    caption.replace(caption.find("{p}"), 3, phrase);

    ExamplePair out = pair;
    out.caption = std::move(caption);
    out.scene.context_tags.emplace_back(ctx->tag);
    out.scene.noise_seed = derive_seed(seed, "context-noise");
    out.text_features.reset();
    out.image_features.reset();
    return out;
}

SceneDescriptor ood_scene(const SceneDescriptor& scene, std::string_view style_tag) {
    if (!find_style(style_tag)) throw Error(ErrorCode::kUnknownTag, "unknown style tag '" + std::string(style_tag) + "'");
    SceneDescriptor out = scene;
    out.style_tag = std::string(style_tag);
    return out;
}

// ---------------------------------------------------------------- generation

namespace {

struct GraphView {
    Triple forget;
    std::vector<std::pair<std::string, Triple>> safe_edges;      // all L1 edges
    std::vector<std::pair<std::string, Triple>> r1_safe_edges;   // L1 edges reusing the forget relation
    std::vector<std::pair<std::string, std::string>> l2_nodes;   // (id, label)
    std::vector<std::pair<std::string, std::string>> endpoints;  // forget endpoints
    std::vector<std::pair<std::string, std::string>> neighbors;  // preservation neighbors
    std::vector<std::pair<std::string, Triple>> neutral;         // graph L4 edges + registered concepts
};

GraphView view_of(const RelationGraph& graph, const CorpusConfig& config) {
    auto roles = assign_roles(graph);
    GraphView v;
    auto label = [&](const std::string& id) { return graph.find_node(id)->label; };
    auto triple = [&](const RelationEdge& e) { return Triple{label(e.from), e.relation, label(e.to)}; };

    v.forget = triple(*graph.find_edge(roles.l3_edge));
    for (const auto& id : roles.l1_edges) {
        const RelationEdge* e = graph.find_edge(id);
        v.safe_edges.emplace_back(id, triple(*e));
        if (e->relation == graph.forget_tuple.relation) v.r1_safe_edges.emplace_back(id, triple(*e));
    }
    for (const auto& id : roles.l2_nodes) {
        const ObjectNode* n = graph.find_node(id);
        v.l2_nodes.emplace_back(id, n->label);
        if (n->role == NodeRole::kForgetEndpoint) v.endpoints.emplace_back(id, n->label);
        if (n->role == NodeRole::kPreservationNeighbor) v.neighbors.emplace_back(id, n->label);
    }
    for (const auto& id : roles.l4_edges) v.neutral.emplace_back(id, triple(*graph.find_edge(id)));
    for (const auto& t : config.neutral_concepts) {
        v.neutral.emplace_back("neutral:" + slugify(describe(t)), t);
    }
    return v;
}

ExamplePair tuple_pair(const Triple& t, std::string_view tmpl, ExampleRole role, std::string source,
                       std::uint64_t noise_seed) {
    return {apply_template(tmpl, describe(t)), tuple_scene(t, noise_seed), role, std::move(source), {}, {}};
}

ExamplePair object_pair(const std::string& label, std::string_view adjective, std::string_view tmpl,
                        ExampleRole role, std::string source, std::uint64_t noise_seed) {
    SceneDescriptor scene;
    scene.objects = {label};
    scene.context_tags = {std::string(adjective)};
    scene.noise_seed = noise_seed;
    return {apply_template(tmpl, noun_phrase(label, adjective)), scene, role, std::move(source),
            {}, {}};
}

std::uint64_t train_seed(const CorpusConfig& c, ExampleRole role, std::size_t i) {
    return derive_seed(c.seed, std::string("train:") + std::string(to_string(role)), i);
}

std::uint64_t eval_seed(const CorpusConfig& c, std::string_view set_name, std::size_t i) {
    return derive_seed(c.seed, std::string("eval:") + std::string(set_name), i);
}

// Every third relational training pair is placed in a training context.
ExamplePair with_train_context(ExamplePair pair, const CorpusConfig& c, std::size_t i) {
    if (c.train_contexts.empty() || i % 3 != 2) return pair;
    const auto& tag = c.train_contexts[(i / 3) % c.train_contexts.size()];
    const ContextInfo* ctx = find_context(tag);
    if (!ctx) throw Error(ErrorCode::kUnknownTag, "unknown context tag '" + tag + "'");
    pair.caption += " " + context_phrase(*ctx);
    pair.scene.context_tags.push_back(tag);
    return pair;
}

std::vector<ExamplePair> anchor_pairs(const GraphView& v, int count, bool eval, const CorpusConfig& c) {
    const auto& templates = eval ? kEvalAnchorTemplates : kAnchorTemplates;
    const auto& adjectives = eval ? kEvalAdjectives : kTrainAdjectives;
    std::vector<ExamplePair> out;
    for (int i = 0; i < count; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const std::uint64_t noise = eval ? eval_seed(c, "anchor", idx) : train_seed(c, ExampleRole::kAnchor, idx);
        const auto tmpl = templates[(idx / 3) % templates.size()];
        switch (idx % 3) {
            case 0: {
                const auto& [id, t] = v.safe_edges[(idx / 3) % v.safe_edges.size()];
                out.push_back(tuple_pair(t, tmpl, ExampleRole::kAnchor, id, noise));
                break;
            }
            case 1: {
                const auto& [id, label] = v.l2_nodes[(idx / 3) % v.l2_nodes.size()];
                out.push_back(object_pair(label, adjectives[(idx / 3) % adjectives.size()], "{}", ExampleRole::kAnchor,
                                          id, noise));
                out.back().caption = apply_template(tmpl, out.back().caption);
                break;
            }
            default: {
                const auto& [id, t] = v.neutral[(idx / 3) % v.neutral.size()];
                out.push_back(tuple_pair(t, tmpl, ExampleRole::kAnchor, id, noise));
                break;
            }
        }
    }
    return out;
}

std::vector<PreservationSet> preservation_sets(const GraphView& v, const CorpusConfig& c) {
    std::vector<PreservationSet> out;
    const auto n = static_cast<std::size_t>(c.eval_per_set);
    auto objects = [&](PreservationCase pc, const std::vector<std::pair<std::string, std::string>>& nodes) {
        PreservationSet set{pc, {}};
        for (std::size_t i = 0; i < n; ++i) {
            const auto& [id, label] = nodes[i % nodes.size()];
            set.pairs.push_back(object_pair(label, kEvalAdjectives[(i / nodes.size()) % kEvalAdjectives.size()],
                                            kEvalTemplates[i % kEvalTemplates.size()], ExampleRole::kL2, id,
                                            eval_seed(c, to_string(pc), i)));
        }
        return set;
    };
    auto tuples = [&](PreservationCase pc, const std::vector<std::pair<std::string, Triple>>& edges, ExampleRole role) {
        PreservationSet set{pc, {}};
        for (std::size_t i = 0; i < n; ++i) {
            const auto& [id, t] = edges[i % edges.size()];
            set.pairs.push_back(tuple_pair(t, kEvalTemplates[(i / edges.size()) % kEvalTemplates.size()], role, id,
                                           eval_seed(c, to_string(pc), i)));
        }
        return set;
    };

    std::vector<std::pair<std::string, Triple>> eval_neutral;
    for (const auto& t : c.eval_neutral_concepts) eval_neutral.emplace_back("neutral:" + slugify(describe(t)), t);
    if (eval_neutral.empty()) throw Error(ErrorCode::kEmptySet, "no held-out neutral concepts for evaluation");
    if (v.neighbors.empty()) throw Error(ErrorCode::kInvalidGraph, "graph has no preservation neighbors");

    out.push_back(objects(PreservationCase::kSingleNode, v.endpoints));
    out.push_back(tuples(PreservationCase::kNewSafeEdge, v.r1_safe_edges, ExampleRole::kL1));
    out.push_back(objects(PreservationCase::kNewSafeNode, v.neighbors));
    out.push_back(tuples(PreservationCase::kNewNeutralEdge, eval_neutral, ExampleRole::kL4));
    return out;
}

std::vector<AttackSet> attack_sets(const GraphView& v, const RelationGraph& graph, const CorpusConfig& c) {
    const auto n = c.eval_per_set;
    const std::string l3_id = assign_roles(graph).l3_edge;
    const std::string bare = bare_description(v.forget);
    const std::string original = describe(v.forget);
    std::vector<AttackSet> out;

    // Paraphrase: one, two, then every phrase substituted. Captions are unique across tiers.
    std::vector<std::string> used;
    const int subs[3] = {1, 2, -1};
    for (std::size_t t = 0; t < 3; ++t) {
        AttackSet set{AttackType::kParaphrase, kAllTiers[t], {}};
        auto captions = paraphrase_variants(bare, n, derive_seed(c.seed, "eval-paraphrase", t), subs[t], t == 2, used);
        for (std::size_t i = 0; i < captions.size(); ++i) {
            used.push_back(captions[i]);
            set.pairs.push_back({captions[i], tuple_scene(v.forget, eval_seed(c, "paraphrase", t * 1000 + i)),
                                 ExampleRole::kAdv, l3_id, {}, {}});
        }
        out.push_back(std::move(set));
    }

    for (std::size_t t = 0; t < 3; ++t) {
        AttackSet set{AttackType::kContextual, kAllTiers[t], {}};
        for (int i = 0; i < n; ++i) {
            ExamplePair base{original, tuple_scene(v.forget), ExampleRole::kAdv, l3_id, {}, {}};
            set.pairs.push_back(
                contextual_variant(base, c.eval_contexts[t], eval_seed(c, "contextual", t * 1000 + static_cast<std::size_t>(i))));
        }
        out.push_back(std::move(set));
    }

    for (std::size_t t = 0; t < 3; ++t) {
        AttackSet set{AttackType::kOodImage, kAllTiers[t], {}};
        for (int i = 0; i < n; ++i) {
            auto scene = ood_scene(tuple_scene(v.forget, eval_seed(c, "ood", t * 1000 + static_cast<std::size_t>(i))),
                                   c.eval_styles[t]);
            set.pairs.push_back({original, scene, ExampleRole::kAdv, l3_id, {}, {}});
        }
        out.push_back(std::move(set));
    }
    return out;
}

void check_config(const CorpusConfig& c) {
    for (auto role : kAllRoles) {
        const int count = c.counts.get(role);
        if (count < 0) throw Error(ErrorCode::kInvalidArgument, "negative count for role " + std::string(to_string(role)));
        if ((c.is_active(role) || role == ExampleRole::kL3) && count == 0) {
            throw Error(ErrorCode::kMissingRole,
                        "role " + std::string(to_string(role)) + " is used by the loss but has count 0");
        }
    }
    if (c.eval_per_set < 1) throw Error(ErrorCode::kInvalidArgument, "eval_per_set must be at least 1");
    for (const auto& tag : c.eval_contexts) {
        if (!find_context(tag)) throw Error(ErrorCode::kUnknownTag, "unknown context tag '" + tag + "'");
    }
    for (const auto& tag : c.eval_styles) {
        if (!find_style(tag)) throw Error(ErrorCode::kUnknownTag, "unknown style tag '" + tag + "'");
    }
}

}  // namespace

std::vector<AttackSet> generate_attack_sets(const RelationGraph& graph, const CorpusConfig& config) {
    check_config(config);
    return attack_sets(view_of(graph, config), graph, config);
}

Corpus generate_corpus(const RelationGraph& graph, const CorpusConfig& config) {
    check_config(config);
    const GraphView v = view_of(graph, config);
    const std::string l3_id = assign_roles(graph).l3_edge;
    Corpus corpus;

    corpus.attacks = attack_sets(v, graph, config);
    corpus.preservation = preservation_sets(v, config);
    corpus.eval_anchors = anchor_pairs(v, 2 * config.eval_per_set, true, config);

    const auto count = [&](ExampleRole r) { return static_cast<std::size_t>(config.counts.get(r)); };

    for (std::size_t i = 0; i < count(ExampleRole::kL3); ++i) {
        auto pair = tuple_pair(v.forget, kTrainTemplates[(i / 3) % kTrainTemplates.size()], ExampleRole::kL3, l3_id,
                               train_seed(config, ExampleRole::kL3, i));
        corpus.role(ExampleRole::kL3).push_back(with_train_context(std::move(pair), config, i));
    }

    for (std::size_t i = 0; i < count(ExampleRole::kL1); ++i) {
        const auto& [id, t] = v.safe_edges[i % v.safe_edges.size()];
        const std::size_t round = i / v.safe_edges.size();
        auto pair = tuple_pair(t, kTrainTemplates[(round / 3) % kTrainTemplates.size()], ExampleRole::kL1, id,
                               train_seed(config, ExampleRole::kL1, i));
        corpus.role(ExampleRole::kL1).push_back(with_train_context(std::move(pair), config, round));
    }

    for (std::size_t i = 0; i < count(ExampleRole::kL2); ++i) {
        const auto& [id, label] = v.l2_nodes[i % v.l2_nodes.size()];
        const std::size_t round = i / v.l2_nodes.size();
        corpus.role(ExampleRole::kL2).push_back(object_pair(
            label, kTrainAdjectives[round % kTrainAdjectives.size()],
            kTrainTemplates[(round / kTrainAdjectives.size()) % kTrainTemplates.size()], ExampleRole::kL2, id,
            train_seed(config, ExampleRole::kL2, i)));
    }

    if (count(ExampleRole::kL4) > 0 && v.neutral.empty()) {
        throw Error(ErrorCode::kMissingRole, "L4 requested but the graph and config define no neutral concepts");
    }
    for (std::size_t i = 0; i < count(ExampleRole::kL4); ++i) {
        const auto& [id, t] = v.neutral[i % v.neutral.size()];
        const std::size_t round = i / v.neutral.size();
        corpus.role(ExampleRole::kL4).push_back(tuple_pair(t, kTrainTemplates[round % kTrainTemplates.size()],
                                                           ExampleRole::kL4, id,
                                                           train_seed(config, ExampleRole::kL4, i)));
    }

    if (count(ExampleRole::kAdv) > 0) {
        std::vector<std::string> held_out;
        for (const auto& set : corpus.attacks) {
            if (set.attack_type != AttackType::kParaphrase) continue;
            for (const auto& p : set.pairs) held_out.push_back(p.caption);
        }
        const std::string bare = bare_description(v.forget);
        std::vector<std::string> pool;
        const int subs[3] = {1, 2, -1};
        for (std::size_t t = 0; t < 3; ++t) {
            auto more = collect_paraphrases(bare, 48, derive_seed(config.seed, "train-paraphrase", t), subs[t], false,
                                            held_out);
            for (auto& s : more) {
                held_out.push_back(s);
                pool.push_back(std::move(s));
            }
        }
        if (pool.empty()) throw Error(ErrorCode::kEmptySet, "no adversarial paraphrases available for training");
        for (std::size_t i = 0; i < count(ExampleRole::kAdv); ++i) {
            corpus.role(ExampleRole::kAdv).push_back({pool[i % pool.size()],
                                                      tuple_scene(v.forget, train_seed(config, ExampleRole::kAdv, i)),
                                                      ExampleRole::kAdv, l3_id, {}, {}});
        }
    }

    corpus.role(ExampleRole::kAnchor) = anchor_pairs(v, config.counts.anchor, false, config);

    auto problems = disjointness_violations(corpus);
    if (!problems.empty()) throw Error(ErrorCode::kInvalidArgument, "eval/train overlap: " + problems.front());
    return corpus;
}

std::vector<std::string> disjointness_violations(const Corpus& corpus) {
    std::set<std::pair<std::string, std::uint64_t>> train_keys;
    for (const auto& role : corpus.train) {
        for (const auto& p : role) train_keys.emplace(p.caption, p.scene.noise_seed);
    }
    auto in_train = [&](const ExamplePair& p) {
        if (!train_keys.contains({p.caption, p.scene.noise_seed})) return false;
        for (const auto& role : corpus.train) {
            for (const auto& q : role) {
                if (q.same_example(p)) return true;
            }
        }
        return false;
    };
    std::vector<std::string> out;
    for (const auto& set : corpus.attacks) {
        for (const auto& p : set.pairs) {
            if (in_train(p)) out.push_back(std::string(to_string(set.attack_type)) + ": '" + p.caption + "'");
        }
    }
    for (const auto& set : corpus.preservation) {
        for (const auto& p : set.pairs) {
            if (in_train(p)) out.push_back(std::string(to_string(set.preservation_case)) + ": '" + p.caption + "'");
        }
    }
    for (const auto& p : corpus.eval_anchors) {
        if (in_train(p)) out.push_back("eval anchor: '" + p.caption + "'");
    }
    return out;
}

// ---------------------------------------------------------------- embedding manifest

namespace {

std::string escape_field(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::optional<std::string> unescape_field(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\') {
            out.push_back(s[i]);
            continue;
        }
        if (++i == s.size()) return std::nullopt;
        switch (s[i]) {
            case '\\': out.push_back('\\'); break;
            case 't': out.push_back('\t'); break;
            case 'n': out.push_back('\n'); break;
            case 'r': out.push_back('\r'); break;
            default: return std::nullopt;
        }
    }
    return out;
}

void append_vector(std::string& out, const Eigen::VectorXd& v) {
    char buf[64];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i > 0) out.push_back(' ');
        auto res = std::to_chars(buf, buf + sizeof(buf), v[i]);
        out.append(buf, res.ptr);
    }
}

std::optional<Eigen::VectorXd> parse_vector(std::string_view s, int expected) {
    std::vector<double> values;
    std::size_t pos = 0;
    while (pos < s.size()) {
        while (pos < s.size() && s[pos] == ' ') ++pos;
        if (pos == s.size()) break;
        double d = 0.0;
        auto res = std::from_chars(s.data() + pos, s.data() + s.size(), d);
        if (res.ec != std::errc() || !std::isfinite(d)) return std::nullopt;
        values.push_back(d);
        pos = static_cast<std::size_t>(res.ptr - s.data());
        if (pos < s.size() && s[pos] != ' ') return std::nullopt;
    }
    if (static_cast<int>(values.size()) != expected) return std::nullopt;
    return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

constexpr std::string_view kManifestMagic = "relunlearn-embeddings v1 dim=";

}  // namespace

std::string emit_embedding_manifest(const std::vector<ExamplePair>& pairs, int dim) {
    std::string out(kManifestMagic);
    out += std::to_string(dim) + "\n";
    for (const auto& p : pairs) {
        if (!p.text_features || !p.image_features) {
            throw Error(ErrorCode::kMissingField, "pair '" + p.caption + "' has no feature vectors to export");
        }
        if (p.text_features->size() != dim || p.image_features->size() != dim) {
            throw Error(ErrorCode::kDimensionMismatch, "pair '" + p.caption + "' has vectors of the wrong dimension");
        }
        out += to_string(p.role);
        out += '\t';
        out += escape_field(p.caption);
        out += '\t';
        append_vector(out, *p.text_features);
        out += '\t';
        append_vector(out, *p.image_features);
        out += '\n';
    }
    return out;
}

Corpus parse_embedding_manifest(std::string_view text, int expected_dim) {
    auto lines = split(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty() || !lines.front().starts_with(kManifestMagic)) {
        throw ParseError(1, "header", "expected '" + std::string(kManifestMagic) + "<d>'");
    }
    int dim = 0;
    auto dim_text = lines.front().substr(kManifestMagic.size());
    auto res = std::from_chars(dim_text.data(), dim_text.data() + dim_text.size(), dim);
    if (res.ec != std::errc() || res.ptr != dim_text.data() + dim_text.size() || dim < 1) {
        throw ParseError(1, "dim", "invalid dimension");
    }
    if (dim != expected_dim) {
        throw Error(ErrorCode::kDimensionMismatch, "manifest dimension " + std::to_string(dim) +
                                                       " does not match encoder d_in " + std::to_string(expected_dim));
    }
    if (lines.size() == 1) throw Error(ErrorCode::kEmptySet, "no examples in embedding manifest");

    Corpus corpus;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const std::string row = "row " + std::to_string(i - 1);
        auto fields = split(lines[i], '\t');
        if (fields.size() != 4) throw ParseError(line_no, row, "expected 4 tab-separated fields");
        auto role = parse_example_role(fields[0]);
        if (!role) throw ParseError(line_no, row + ".role", "unknown role '" + std::string(fields[0]) + "'");
        auto caption = unescape_field(fields[1]);
        if (!caption || caption->empty()) throw ParseError(line_no, row + ".caption", "empty or badly escaped caption");
        auto tv = parse_vector(fields[2], dim);
        if (!tv) throw ParseError(line_no, row + ".text_vec", "expected " + std::to_string(dim) + " finite floats");
        auto iv = parse_vector(fields[3], dim);
        if (!iv) throw ParseError(line_no, row + ".image_vec", "expected " + std::to_string(dim) + " finite floats");

        ExamplePair p;
        p.caption = std::move(*caption);
        p.scene.objects = {"external"};
        p.role = *role;
        p.source_element = "external";
        p.text_features = std::move(tv);
        p.image_features = std::move(iv);
        corpus.role(*role).push_back(std::move(p));
    }
    return corpus;
}

Corpus import_manifest(const std::string& path, int expected_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open embedding manifest '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_embedding_manifest(ss.str(), expected_dim);
}

// ---------------------------------------------------------------- corpus manifest

namespace {

ordered_json to_json(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

ordered_json to_json(const ExamplePair& p) {
    ordered_json scene;
    scene["objects"] = p.scene.objects;
    scene["relation"] = p.scene.relation ? ordered_json(*p.scene.relation) : ordered_json(nullptr);
    scene["context_tags"] = p.scene.context_tags;
    scene["style_tag"] = p.scene.style_tag;
    scene["noise_seed"] = p.scene.noise_seed;
    ordered_json j;
    j["caption"] = p.caption;
    j["role"] = to_string(p.role);
    j["source"] = p.source_element;
    j["scene"] = std::move(scene);
    if (p.text_features) j["text_vec"] = to_json(*p.text_features);
    if (p.image_features) j["image_vec"] = to_json(*p.image_features);
    return j;
}

ordered_json to_json(const std::vector<ExamplePair>& pairs) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : pairs) arr.push_back(to_json(p));
    return arr;
}

const ordered_json& need(const ordered_json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(0, path + "." + key, "missing field");
    return j.at(key);
}

template <typename T>
T get_as(const ordered_json& j, const char* key, const std::string& path) {
    try {
        return need(j, key, path).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, path + "." + key, e.what());
    }
}

Eigen::VectorXd vector_from(const ordered_json& j, const std::string& path) {
    if (!j.is_array()) throw ParseError(0, path, "expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ParseError(0, path + "[" + std::to_string(i) + "]", "expected a number");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

ExamplePair pair_from(const ordered_json& j, const std::string& path) {
    ExamplePair p;
    p.caption = get_as<std::string>(j, "caption", path);
    auto role = parse_example_role(get_as<std::string>(j, "role", path));
    if (!role) throw ParseError(0, path + ".role", "unknown role");
    p.role = *role;
    p.source_element = get_as<std::string>(j, "source", path);
    const auto& s = need(j, "scene", path);
    const std::string sp = path + ".scene";
    p.scene.objects = get_as<std::vector<std::string>>(s, "objects", sp);
    const auto& rel = need(s, "relation", sp);
    if (!rel.is_null()) p.scene.relation = get_as<std::string>(s, "relation", sp);
    p.scene.context_tags = get_as<std::vector<std::string>>(s, "context_tags", sp);
    p.scene.style_tag = get_as<std::string>(s, "style_tag", sp);
    p.scene.noise_seed = get_as<std::uint64_t>(s, "noise_seed", sp);
    if (j.contains("text_vec")) p.text_features = vector_from(j["text_vec"], path + ".text_vec");
    if (j.contains("image_vec")) p.image_features = vector_from(j["image_vec"], path + ".image_vec");
    return p;
}

std::vector<ExamplePair> pairs_from(const ordered_json& j, const std::string& path) {
    if (!j.is_array()) throw ParseError(0, path, "expected an array");
    std::vector<ExamplePair> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(pair_from(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

}  // namespace

std::string emit_corpus(const Corpus& corpus) {
    ordered_json doc;
    doc["format"] = "relunlearn-corpus";
    doc["version"] = 1;
    ordered_json train;
    for (auto role : kAllRoles) train[std::string(to_string(role))] = to_json(corpus.role(role));
    doc["train"] = std::move(train);
    ordered_json attacks = ordered_json::array();
    for (const auto& a : corpus.attacks) {
        attacks.push_back({{"attack_type", to_string(a.attack_type)}, {"tier", to_string(a.tier)}, {"pairs", to_json(a.pairs)}});
    }
    doc["attacks"] = std::move(attacks);
    ordered_json pres = ordered_json::array();
    for (const auto& p : corpus.preservation) {
        pres.push_back({{"case", to_string(p.preservation_case)}, {"pairs", to_json(p.pairs)}});
    }
    doc["preservation"] = std::move(pres);
    doc["eval_anchors"] = to_json(corpus.eval_anchors);
    return doc.dump(1) + "\n";
}

Corpus parse_corpus(std::string_view text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t byte = std::min<std::size_t>(e.byte, text.size());
        std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
        throw ParseError(line, "", e.what());
    }
    if (get_as<std::string>(doc, "format", "$") != "relunlearn-corpus") {
        throw ParseError(0, "$.format", "not a corpus manifest");
    }
    if (get_as<int>(doc, "version", "$") != 1) throw Error(ErrorCode::kVersionMismatch, "unsupported corpus version");

    Corpus corpus;
    const auto& train = need(doc, "train", "$");
    for (auto role : kAllRoles) {
        const std::string key(to_string(role));
        corpus.role(role) = pairs_from(need(train, key.c_str(), "$.train"), "$.train." + key);
    }
    const auto& attacks = need(doc, "attacks", "$");
    if (!attacks.is_array()) throw ParseError(0, "$.attacks", "expected an array");
    for (std::size_t i = 0; i < attacks.size(); ++i) {
        const std::string path = "$.attacks[" + std::to_string(i) + "]";
        auto type = parse_attack_type(get_as<std::string>(attacks[i], "attack_type", path));
        auto tier = parse_tier(get_as<std::string>(attacks[i], "tier", path));
        if (!type || !tier) throw ParseError(0, path, "unknown attack type or tier");
        corpus.attacks.push_back({*type, *tier, pairs_from(need(attacks[i], "pairs", path), path + ".pairs")});
    }
    const auto& pres = need(doc, "preservation", "$");
    if (!pres.is_array()) throw ParseError(0, "$.preservation", "expected an array");
    for (std::size_t i = 0; i < pres.size(); ++i) {
        const std::string path = "$.preservation[" + std::to_string(i) + "]";
        auto pc = parse_preservation_case(get_as<std::string>(pres[i], "case", path));
        if (!pc) throw ParseError(0, path + ".case", "unknown preservation case");
        corpus.preservation.push_back({*pc, pairs_from(need(pres[i], "pairs", path), path + ".pairs")});
    }
    corpus.eval_anchors = pairs_from(need(doc, "eval_anchors", "$"), "$.eval_anchors");
    return corpus;
}

}  // namespace relunlearn
