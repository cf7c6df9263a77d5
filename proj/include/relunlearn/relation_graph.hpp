#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace relunlearn {

enum class NodeRole { kForgetEndpoint, kPreservationNeighbor, kNeutral };

// Which loss term an edge feeds: L3 (push), L1 (safe pull) or L4 (neutral pull).
enum class EdgeRole { kUnsafeForget, kSafeEdgePull, kNeutralPull };

std::string_view to_string(NodeRole role);
std::string_view to_string(EdgeRole role);
std::optional<NodeRole> parse_node_role(std::string_view text);
std::optional<EdgeRole> parse_edge_role(std::string_view text);

struct ObjectNode {
    std::string id;
    std::string label;
    NodeRole role = NodeRole::kNeutral;

    bool operator==(const ObjectNode&) const = default;
};

// Edges are ordered (subject -> object).
struct RelationEdge {
    std::string id;
    std::string relation;
    std::string from;
    std::string to;
    EdgeRole loss_role = EdgeRole::kSafeEdgePull;

    bool operator==(const RelationEdge&) const = default;
};

struct ForgetTuple {
    std::string o1;
    std::string relation;
    std::string o2;

    bool operator==(const ForgetTuple&) const = default;
};

struct RelationGraph {
    std::vector<ObjectNode> nodes;
    std::vector<RelationEdge> edges;
    ForgetTuple forget_tuple;

    const ObjectNode* find_node(std::string_view id) const;
    const RelationEdge* find_edge(std::string_view id) const;

    bool operator==(const RelationGraph&) const = default;
};

struct Triple {
    std::string subject;
    std::string relation;
    std::string object;

    bool operator==(const Triple&) const = default;
};

// Input to build_unlearn_graph. Subject neighbors stand in for O1 next to O2
// (adult-eating-hamburger); object neighbors stand in for O2 next to O1
// (kid-eating-salad).
struct GraphSpec {
    Triple forget;
    std::vector<std::string> subject_neighbors;
    std::vector<std::string> object_neighbors;
    std::string alt_relation;
    std::vector<Triple> neutral_edges;
    bool operator==(const GraphSpec&) const = default;
};

struct RoleAssignment {
    std::vector<std::string> l1_edges;
    std::string l3_edge;
    std::vector<std::string> l4_edges;
    std::vector<std::string> l2_nodes;
};

// Identifier derived from a label: lowercase, runs of non-alphanumerics become '_'.
std::string slugify(std::string_view label);

RelationGraph build_unlearn_graph(const GraphSpec& spec);

// Empty result means the graph is valid.
std::vector<std::string> validate(const RelationGraph& graph);

RoleAssignment assign_roles(const RelationGraph& graph);

std::string emit_graph(const RelationGraph& graph);
RelationGraph parse_graph(std::string_view text);

RelationGraph load_graph(const std::string& path);
void save_graph(const RelationGraph& graph, const std::string& path);

// The worked example used throughout: forget kid-eating-hamburger.
GraphSpec hamburger_spec();

}  // namespace relunlearn
