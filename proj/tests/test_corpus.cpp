#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "relunlearn/corpus.hpp"
#include "relunlearn/lexicon.hpp"
#include "relunlearn/scene.hpp"
#include "test_support.hpp"

using namespace relunlearn;
using namespace relunlearn::testing;

namespace {

CorpusConfig small_corpus(int per_role, std::uint64_t seed = 7) {
    CorpusConfig c;
    c.seed = seed;
    for (ExampleRole r : kAllRoles) c.counts.set(r, per_role);
    c.eval_per_set = 4;
    return c;
}

bool has_token(const std::string& caption, const std::string& token) {
    const auto toks = tokenize(caption);
    return std::find(toks.begin(), toks.end(), token) != toks.end();
}

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "relunlearn-tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("lexicon segmentation and articles") {
    CHECK(tokenize("A Kid, eating!") == std::vector<std::string>{"a", "kid", "eating"});
    CHECK(concepts_of("a youngster taking a bite of a meat patty") == concepts_of("a kid eating a hamburger"));
    CHECK(indefinite_article("hamburger") == "a");
    CHECK(indefinite_article("adult") == "an");
    REQUIRE(find_concept("kid"));
    CHECK(find_concept("kid")->synonyms.front() == "youngster");
}

TEST_CASE("scene registries") {
    REQUIRE(find_style("van-gogh"));
    CHECK(find_style("photo")->strength == 0.0);
    CHECK(find_style("x") == nullptr);
    const ContextInfo* ctx = find_context("futuristic city street at night");
    REQUIRE(ctx);
    CHECK(context_phrase(*ctx) == "on a futuristic city street at night");
    CHECK_FALSE(scene_problem(tuple_scene({"kid", "eating", "hamburger"})).has_value());
    SceneDescriptor bad;
    CHECK(scene_problem(bad).has_value());
}

TEST_CASE("L3 captions name both forget objects and the relation") {
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    const Corpus c = generate_corpus(g, small_corpus(8));
    const auto& l3 = c.role(ExampleRole::kL3);
    REQUIRE(l3.size() == 8);
    for (const auto& p : l3) {
        CHECK(has_token(p.caption, "kid"));
        CHECK(has_token(p.caption, "hamburger"));
        CHECK(has_token(p.caption, "eating"));
        CHECK(p.scene.objects == std::vector<std::string>{"kid", "hamburger"});
        CHECK(p.scene.relation == "eating");
    }
    for (ExampleRole r : kAllRoles) CHECK(c.role(r).size() == 8);
}

TEST_CASE("role contents follow the graph") {
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    const Corpus c = generate_corpus(g, small_corpus(16));
    for (const auto& p : c.role(ExampleRole::kL2)) {
        CHECK(p.scene.objects.size() == 1);
        CHECK_FALSE(p.scene.relation.has_value());
    }
    for (const auto& p : c.role(ExampleRole::kL1)) {
        CHECK(p.scene.relation.has_value());
        CHECK(g.find_edge(p.source_element));
        CHECK(g.find_edge(p.source_element)->loss_role == EdgeRole::kSafeEdgePull);
    }
    // Adversarial pairs reference the unsafe scene.
    for (const auto& p : c.role(ExampleRole::kAdv)) {
        CHECK(p.scene.objects == std::vector<std::string>{"kid", "hamburger"});
        CHECK(p.scene.relation == "eating");
    }
    for (const auto& p : c.role(ExampleRole::kL4)) CHECK(p.source_element.rfind("neutral:", 0) == 0);
    std::set<ExampleRole> sources;
    CHECK(disjointness_violations(c).empty());
}

TEST_CASE("generation is deterministic and seed-sensitive") {
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    const Corpus a = generate_corpus(g, small_corpus(8, 3));
    const Corpus b = generate_corpus(g, small_corpus(8, 3));
    CHECK(a == b);
    CHECK(emit_corpus(a) == emit_corpus(b));
    CHECK_FALSE(generate_corpus(g, small_corpus(8, 4)) == a);
}

TEST_CASE("zero count for an active role is an error") {
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    CorpusConfig c = small_corpus(4);
    c.counts.l3 = 0;
    CHECK(code_of([&] { generate_corpus(g, c); }) == ErrorCode::kMissingRole);
    // Inactive roles may be empty.
    c = small_corpus(4);
    c.counts.l4 = 0;
    c.active[static_cast<std::size_t>(ExampleRole::kL4)] = false;
    CHECK(generate_corpus(g, c).role(ExampleRole::kL4).empty());
}

TEST_CASE("paraphrase variants") {
    const auto one = paraphrase_variants("kid eating a hamburger", 1, 7);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == "youngster taking a bite of a meat patty");
    const auto three = paraphrase_variants("a kid eating a hamburger", 3, 11);
    REQUIRE(three.size() == 3);
    CHECK(std::set<std::string>(three.begin(), three.end()).size() == 3);
    for (const auto& v : three) CHECK(v != "a kid eating a hamburger");
    CHECK(paraphrase_variants("a kid eating a hamburger", 3, 11) == three);
    CHECK(code_of([] { paraphrase_variants("a kid", 0, 1); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("contextual and OOD variants") {
    const ExamplePair base{"a kid eating a hamburger", tuple_scene({"kid", "eating", "hamburger"}),
                           ExampleRole::kL3, "kid-eating-hamburger", {}, {}};
    const ExamplePair ctx = contextual_variant(base, "futuristic city street at night", 1);
    CHECK(ctx.caption.find("futuristic city street at night") != std::string::npos);
    CHECK(ctx.caption.find("hamburger") != std::string::npos);
    CHECK(ctx.scene.context_tags == std::vector<std::string>{"futuristic city street at night"});
    CHECK(code_of([&] { contextual_variant(base, "moon", 1); }) == ErrorCode::kUnknownTag);

    const SceneDescriptor ood = ood_scene(base.scene, "van-gogh");
    CHECK(ood.style_tag == "van-gogh");
    CHECK(ood.objects == base.scene.objects);
    CHECK(ood.relation == base.scene.relation);
    CHECK(code_of([&] { ood_scene(base.scene, "x"); }) == ErrorCode::kUnknownTag);
}

TEST_CASE("attack sets cover every type and tier") {
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    const CorpusConfig cfg = small_corpus(4);
    const auto sets = generate_attack_sets(g, cfg);
    CHECK(sets.size() == 9);
    const SceneDescriptor unsafe = tuple_scene({"kid", "eating", "hamburger"});
    for (AttackType t : kAllAttacks) {
        for (Tier tier : kAllTiers) {
            const auto it = std::find_if(sets.begin(), sets.end(),
                                         [&](const AttackSet& s) { return s.attack_type == t && s.tier == tier; });
            REQUIRE(it != sets.end());
            CHECK_FALSE(it->pairs.empty());
        }
    }
    bool worked_example = false;
    for (const auto& s : sets) {
        for (const auto& p : s.pairs) {
            if (s.attack_type == AttackType::kParaphrase) {
                worked_example |= p.caption.find("youngster taking a bite of a meat patty") != std::string::npos;
                CHECK(p.scene.objects == unsafe.objects);
            }
            if (s.attack_type == AttackType::kContextual) {
                const std::string& tag = cfg.eval_contexts[static_cast<std::size_t>(s.tier)];
                CHECK(p.caption.find(tag) != std::string::npos);
            }
            if (s.attack_type == AttackType::kOodImage) {
                SceneDescriptor same = p.scene;
                same.style_tag = unsafe.style_tag;
                same.noise_seed = unsafe.noise_seed;
                CHECK(same == unsafe);
                CHECK(p.scene.style_tag == cfg.eval_styles[static_cast<std::size_t>(s.tier)]);
            }
        }
    }
    CHECK(worked_example);
}

TEST_CASE("embedding manifest") {
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    Corpus c = generate_corpus(g, small_corpus(2));
    std::vector<ExamplePair> pairs;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    for (ExampleRole r : kAllRoles) {
        for (auto p : c.role(r)) {
            p.text_features = Eigen::VectorXd(64);
            p.image_features = Eigen::VectorXd(64);
            for (auto& x : *p.text_features) x = n(rng);
            for (auto& x : *p.image_features) x = n(rng);
            pairs.push_back(p);
        }
    }
    pairs.front().caption = "tab\there\nnewline \\ slash";
    const std::string text = emit_embedding_manifest(pairs, 64);
    const Corpus back = parse_embedding_manifest(text, 64);
    std::size_t total = 0;
    for (ExampleRole r : kAllRoles) total += back.role(r).size();
    CHECK(total == pairs.size());
    const auto& first = back.role(pairs.front().role).front();
    CHECK(first.caption == pairs.front().caption);
    CHECK(*first.text_features == *pairs.front().text_features);
    CHECK(first.source_element == "external");

    CHECK(code_of([&] { parse_embedding_manifest(emit_embedding_manifest(pairs, 64), 32); }) ==
          ErrorCode::kDimensionMismatch);
    try {
        parse_embedding_manifest("relunlearn-embeddings v1 dim=64\n", 64);
        FAIL("empty manifest parsed");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("no examples") != std::string::npos);
    }
    std::string broken = text;
    broken += "L1\tcaption only\n";
    try {
        parse_embedding_manifest(broken, 64);
        FAIL("malformed row parsed");
    } catch (const ParseError& e) {
        CHECK(e.line() == pairs.size() + 2);
    }

    const std::string path = temp_path("manifest.tsv");
    std::ofstream(path) << text;
    CHECK(import_manifest(path, 64) == back);
    CHECK(code_of([&] { import_manifest(temp_path("absent.tsv"), 64); }) == ErrorCode::kIo);
}

TEST_CASE("property: parse_corpus(emit_corpus(c)) == c over random graphs and seeds") {
    std::mt19937_64 rng(4242);
    std::normal_distribution<double> n;
    for (int i = 0; i < 100; ++i) {
        const RelationGraph g = build_unlearn_graph(random_spec(rng));
        Corpus c = generate_corpus(g, small_corpus(1 + static_cast<int>(rng() % 3), rng()));
        // Some pairs carry imported vectors, which must survive bit-exactly.
        auto& l1 = c.role(ExampleRole::kL1);
        if (i % 2 == 0 && !l1.empty()) {
            l1.front().text_features = Eigen::VectorXd(8);
            l1.front().image_features = Eigen::VectorXd(8);
            for (auto& x : *l1.front().text_features) x = n(rng) * 1e-7;
            for (auto& x : *l1.front().image_features) x = n(rng) * 1e5;
        }
        const std::string text = emit_corpus(c);
        const Corpus back = parse_corpus(text);
        REQUIRE(back == c);
        REQUIRE(emit_corpus(back) == text);
        REQUIRE(disjointness_violations(c).empty());
    }
}

TEST_CASE("corpus manifest errors") {
    CHECK_THROWS_AS(parse_corpus(""), ParseError);
    CHECK_THROWS_AS(parse_corpus("{\"format\": \"other\"}"), ParseError);
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    std::string text = emit_corpus(generate_corpus(g, small_corpus(1)));
    const auto pos = text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"version\": 9");
    CHECK(code_of([&] { parse_corpus(text); }) == ErrorCode::kVersionMismatch);
}

}  // TEST_SUITE
