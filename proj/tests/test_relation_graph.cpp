#include <doctest.h>

#include <algorithm>
#include <set>

#include "relunlearn/relation_graph.hpp"
#include "test_support.hpp"

using namespace relunlearn;
using namespace relunlearn::testing;

namespace {

bool contains(const std::vector<std::string>& v, std::string_view needle) {
    return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_SUITE("relation_graph") {

TEST_CASE("hamburger graph has the four nodes and four edges of the worked example") {
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    REQUIRE(g.nodes.size() == 4);
    REQUIRE(g.edges.size() == 4);
    CHECK(validate(g).empty());

    std::set<std::string> ids;
    for (const auto& n : g.nodes) ids.insert(n.id);
    CHECK(ids == std::set<std::string>{"kid", "hamburger", "adult", "salad"});

    const auto* forget = g.find_edge("kid-eating-hamburger");
    REQUIRE(forget);
    CHECK(forget->loss_role == EdgeRole::kUnsafeForget);
    for (const char* id : {"kid-eating-salad", "adult-eating-hamburger", "kid-holding-hamburger"}) {
        const auto* e = g.find_edge(id);
        REQUIRE_MESSAGE(e, id);
        CHECK(e->loss_role == EdgeRole::kSafeEdgePull);
    }
    CHECK(g.forget_tuple == ForgetTuple{"kid", "eating", "hamburger"});
    CHECK(g.find_node("kid")->role == NodeRole::kForgetEndpoint);
    CHECK(g.find_node("salad")->role == NodeRole::kPreservationNeighbor);
}

TEST_CASE("role assignment of the worked example") {
    // Oracle: enumerate edges by loss role on the constructed graph.
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    const RoleAssignment r = assign_roles(g);
    CHECK(r.l3_edge == "kid-eating-hamburger");
    std::set<std::string> l1(r.l1_edges.begin(), r.l1_edges.end());
    CHECK(l1 == std::set<std::string>{"kid-eating-salad", "adult-eating-hamburger", "kid-holding-hamburger"});
    CHECK(r.l4_edges.empty());
    std::set<std::string> l2(r.l2_nodes.begin(), r.l2_nodes.end());
    CHECK(l2 == std::set<std::string>{"kid", "hamburger", "adult", "salad"});
}

TEST_CASE("neutral edges land in l4") {
    GraphSpec s = hamburger_spec();
    s.neutral_edges.push_back({"coffee", "near", "Eiffel Tower"});
    const RelationGraph g = build_unlearn_graph(s);
    const RoleAssignment r = assign_roles(g);
    REQUIRE(r.l4_edges.size() == 1);
    CHECK(r.l4_edges[0] == "coffee-near-eiffel_tower");
    CHECK(g.find_node("eiffel_tower")->role == NodeRole::kNeutral);
    // Neutral nodes are not preservation targets.
    CHECK(std::find(r.l2_nodes.begin(), r.l2_nodes.end(), "coffee") == r.l2_nodes.end());
}

TEST_CASE("build errors") {
    SUBCASE("self-loop forget tuple") {
        GraphSpec s{{"A", "r", "A"}, {"C"}, {"D"}, "s", {}};
        CHECK(code_of([&] { build_unlearn_graph(s); }) == ErrorCode::kDuplicateLabel);
    }
    SUBCASE("neighbor repeats an endpoint label") {
        GraphSpec s = hamburger_spec();
        s.object_neighbors.push_back("kid");
        CHECK(code_of([&] { build_unlearn_graph(s); }) == ErrorCode::kDuplicateLabel);
    }
    SUBCASE("empty label") {
        GraphSpec s = hamburger_spec();
        s.forget.relation = "";
        CHECK(code_of([&] { build_unlearn_graph(s); }) == ErrorCode::kMissingField);
    }
    SUBCASE("no neighbors") {
        GraphSpec s = hamburger_spec();
        s.subject_neighbors.clear();
        s.object_neighbors.clear();
        CHECK(code_of([&] { build_unlearn_graph(s); }) == ErrorCode::kMissingField);
    }
    SUBCASE("alternate relation equal to the forget relation") {
        GraphSpec s = hamburger_spec();
        s.alt_relation = "Eating";
        CHECK(code_of([&] { build_unlearn_graph(s); }) == ErrorCode::kDuplicateLabel);
    }
    SUBCASE("neutral edge reusing a forget object") {
        GraphSpec s = hamburger_spec();
        s.neutral_edges.push_back({"kid", "near", "tree"});
        CHECK(code_of([&] { build_unlearn_graph(s); }) == ErrorCode::kDuplicateLabel);
    }
}

TEST_CASE("validate reports each broken invariant") {
    const RelationGraph good = build_unlearn_graph(hamburger_spec());

    SUBCASE("two forget edges") {
        RelationGraph g = good;
        g.find_edge("kid-eating-salad");
        for (auto& e : g.edges) {
            if (e.id == "kid-eating-salad") e.loss_role = EdgeRole::kUnsafeForget;
        }
        CHECK(contains(validate(g), "multiple forget edges"));
        CHECK(code_of([&] { assign_roles(g); }) == ErrorCode::kInvalidGraph);
    }
    SUBCASE("missing alternate relation") {
        RelationGraph g = good;
        std::erase_if(g.edges, [](const RelationEdge& e) { return e.id == "kid-holding-hamburger"; });
        CHECK(contains(validate(g), "no alternate relation between forget endpoints"));
    }
    SUBCASE("no safe reuse of the forget relation") {
        RelationGraph g = good;
        std::erase_if(g.edges, [](const RelationEdge& e) {
            return e.id == "kid-eating-salad" || e.id == "adult-eating-hamburger";
        });
        CHECK(contains(validate(g), "no safe edge reusing the forget relation"));
    }
    SUBCASE("dangling endpoint and self-loop") {
        RelationGraph g = good;
        g.edges.push_back({"x", "near", "kid", "ghost", EdgeRole::kNeutralPull});
        g.edges.push_back({"y", "near", "salad", "salad", EdgeRole::kNeutralPull});
        const auto report = validate(g);
        CHECK(contains(report, "references missing node 'ghost'"));
        CHECK(contains(report, "self-loop on edge 'y'"));
    }
    SUBCASE("duplicate node id and empty label") {
        RelationGraph g = good;
        g.nodes.push_back({"kid", "", NodeRole::kNeutral});
        const auto report = validate(g);
        CHECK(contains(report, "duplicate node id 'kid'"));
        CHECK(contains(report, "empty label"));
    }
    SUBCASE("no forget edge") {
        RelationGraph g = good;
        std::erase_if(g.edges, [](const RelationEdge& e) { return e.loss_role == EdgeRole::kUnsafeForget; });
        CHECK(contains(validate(g), "no forget edge"));
    }
}

TEST_CASE("manifest round trip and stable bytes") {
    const RelationGraph g = build_unlearn_graph(hamburger_spec());
    const std::string text = emit_graph(g);
    CHECK(parse_graph(text) == g);
    CHECK(emit_graph(build_unlearn_graph(hamburger_spec())) == text);
    // Documented key order.
    CHECK(text.find("\"nodes\"") < text.find("\"edges\""));
    CHECK(text.find("\"edges\"") < text.find("\"forget_tuple\""));
}

TEST_CASE("parse errors carry line and field") {
    try {
        parse_graph("");
        FAIL("empty text parsed");
    } catch (const ParseError& e) {
        CHECK(e.line() == 1);
    }
    std::string text = emit_graph(build_unlearn_graph(hamburger_spec()));
    const auto pos = text.find("\"loss_role\": \"safe-edge-pull\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, std::string("\"loss_role\": \"safe-edge-pull\"").size(), "\"loss_rolx\": \"safe-edge-pull\"");
    try {
        parse_graph(text);
        FAIL("missing field parsed");
    } catch (const ParseError& e) {
        CHECK(e.field().find("loss_role") != std::string::npos);
    }
    try {
        parse_graph("{\n  \"nodes\": [\n    {\"id\": \"a\",\n");
        FAIL("truncated JSON parsed");
    } catch (const ParseError& e) {
        CHECK(e.line() >= 3);
    }
}

TEST_CASE("property: parse(emit(g)) == g over random valid specs") {
    std::mt19937_64 rng(20240601);
    for (int i = 0; i < 150; ++i) {
        const GraphSpec spec = random_spec(rng);
        const RelationGraph g = build_unlearn_graph(spec);
        REQUIRE(validate(g).empty());
        const std::string text = emit_graph(g);
        const RelationGraph back = parse_graph(text);
        REQUIRE(back == g);
        REQUIRE(emit_graph(back) == text);

        // Role lists are disjoint and cover every edge.
        const RoleAssignment r = assign_roles(g);
        std::multiset<std::string> all(r.l1_edges.begin(), r.l1_edges.end());
        all.insert(r.l4_edges.begin(), r.l4_edges.end());
        all.insert(r.l3_edge);
        REQUIRE(all.size() == g.edges.size());
        REQUIRE(std::set<std::string>(all.begin(), all.end()).size() == all.size());
        int forget = 0;
        for (const auto& e : g.edges) forget += e.loss_role == EdgeRole::kUnsafeForget;
        REQUIRE(forget == 1);
    }
}

TEST_CASE("slugify") {
    CHECK(slugify("Eiffel Tower") == "eiffel_tower");
    CHECK(slugify("  glass of  wine!") == "glass_of_wine");
    CHECK(slugify("--") == "");
}

}  // TEST_SUITE
