#include "relunlearn/relation_graph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "file_io.hpp"
#include "relunlearn/error.hpp"

namespace relunlearn {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(NodeRole role) {
    switch (role) {
        case NodeRole::kForgetEndpoint: return "forget-endpoint";
        case NodeRole::kPreservationNeighbor: return "preservation-neighbor";
        case NodeRole::kNeutral: return "neutral";
    }
    return "neutral";
}

std::string_view to_string(EdgeRole role) {
    switch (role) {
        case EdgeRole::kUnsafeForget: return "unsafe-forget";
        case EdgeRole::kSafeEdgePull: return "safe-edge-pull";
        case EdgeRole::kNeutralPull: return "neutral-pull";
    }
    return "safe-edge-pull";
}

std::optional<NodeRole> parse_node_role(std::string_view text) {
    for (auto role : {NodeRole::kForgetEndpoint, NodeRole::kPreservationNeighbor, NodeRole::kNeutral}) {
        if (to_string(role) == text) return role;
    }
    return std::nullopt;
}

std::optional<EdgeRole> parse_edge_role(std::string_view text) {
    for (auto role : {EdgeRole::kUnsafeForget, EdgeRole::kSafeEdgePull, EdgeRole::kNeutralPull}) {
        if (to_string(role) == text) return role;
    }
    return std::nullopt;
}

const ObjectNode* RelationGraph::find_node(std::string_view id) const {
    auto it = std::find_if(nodes.begin(), nodes.end(), [&](const ObjectNode& n) { return n.id == id; });
    return it == nodes.end() ? nullptr : &*it;
}

const RelationEdge* RelationGraph::find_edge(std::string_view id) const {
    auto it = std::find_if(edges.begin(), edges.end(), [&](const RelationEdge& e) { return e.id == id; });
    return it == edges.end() ? nullptr : &*it;
}

std::string slugify(std::string_view label) {
    std::string out;
    bool pending_sep = false;
    for (unsigned char c : label) {
        if (std::isalnum(c)) {
            if (pending_sep && !out.empty()) out.push_back('_');
            pending_sep = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_sep = true;
        }
    }
    return out;
}

namespace {

std::string edge_id(const std::string& from, const std::string& relation, const std::string& to) {
    return from + "-" + slugify(relation) + "-" + to;
}

void require_label(const std::string& value, const char* field) {
    if (slugify(value).empty()) {
        throw Error(ErrorCode::kMissingField, std::string("graph spec field '") + field + "' is empty");
    }
}

class GraphBuilder {
public:
    const std::string& add_node(const std::string& label, NodeRole role) {
        std::string id = slugify(label);
        if (!ids_.insert(id).second) {
            throw Error(ErrorCode::kDuplicateLabel, "duplicate object label '" + label + "'");
        }
        graph_.nodes.push_back({id, label, role});
        return graph_.nodes.back().id;
    }

    void add_edge(const std::string& from, const std::string& relation, const std::string& to, EdgeRole role) {
        if (from == to) {
            throw Error(ErrorCode::kDuplicateLabel, "relation '" + relation + "' would be a self-loop on '" + from + "'");
        }
        std::string id = edge_id(from, relation, to);
        if (!edge_ids_.insert(id).second) {
            throw Error(ErrorCode::kDuplicateLabel, "duplicate edge '" + id + "'");
        }
        graph_.edges.push_back({id, relation, from, to, role});
    }

    RelationGraph& graph() { return graph_; }

private:
    RelationGraph graph_;
    std::set<std::string> ids_;
    std::set<std::string> edge_ids_;
};

}  // namespace

RelationGraph build_unlearn_graph(const GraphSpec& spec) {
    require_label(spec.forget.subject, "forget.subject");
    require_label(spec.forget.relation, "forget.relation");
    require_label(spec.forget.object, "forget.object");
    require_label(spec.alt_relation, "alt_relation");
    if (spec.subject_neighbors.empty() && spec.object_neighbors.empty()) {
        throw Error(ErrorCode::kMissingField, "graph spec needs at least one preservation neighbor");
    }
    for (const auto& n : spec.subject_neighbors) require_label(n, "subject_neighbors");
    for (const auto& n : spec.object_neighbors) require_label(n, "object_neighbors");
    if (slugify(spec.forget.subject) == slugify(spec.forget.object)) {
        throw Error(ErrorCode::kDuplicateLabel,
                    "forget tuple endpoints are the same object '" + spec.forget.subject + "' (self-loop)");
    }
    if (slugify(spec.alt_relation) == slugify(spec.forget.relation)) {
        throw Error(ErrorCode::kDuplicateLabel, "alternate relation must differ from the forget relation");
    }

    GraphBuilder b;
    const std::string o1 = b.add_node(spec.forget.subject, NodeRole::kForgetEndpoint);
    const std::string o2 = b.add_node(spec.forget.object, NodeRole::kForgetEndpoint);
    std::vector<std::string> subj_ids, obj_ids;
    for (const auto& n : spec.subject_neighbors) subj_ids.push_back(b.add_node(n, NodeRole::kPreservationNeighbor));
    for (const auto& n : spec.object_neighbors) obj_ids.push_back(b.add_node(n, NodeRole::kPreservationNeighbor));

    b.add_edge(o1, spec.forget.relation, o2, EdgeRole::kUnsafeForget);
    for (const auto& id : obj_ids) b.add_edge(o1, spec.forget.relation, id, EdgeRole::kSafeEdgePull);
    for (const auto& id : subj_ids) b.add_edge(id, spec.forget.relation, o2, EdgeRole::kSafeEdgePull);
    b.add_edge(o1, spec.alt_relation, o2, EdgeRole::kSafeEdgePull);

    for (const auto& t : spec.neutral_edges) {
        require_label(t.subject, "neutral_edges.subject");
        require_label(t.relation, "neutral_edges.relation");
        require_label(t.object, "neutral_edges.object");
        std::string from = slugify(t.subject), to = slugify(t.object);
        if (!b.graph().find_node(from)) b.add_node(t.subject, NodeRole::kNeutral);
        if (!b.graph().find_node(to)) b.add_node(t.object, NodeRole::kNeutral);
        if (b.graph().find_node(from)->role != NodeRole::kNeutral ||
            b.graph().find_node(to)->role != NodeRole::kNeutral) {
            throw Error(ErrorCode::kDuplicateLabel, "neutral edge reuses a forget or neighbor object");
        }
        b.add_edge(from, t.relation, to, EdgeRole::kNeutralPull);
    }

    b.graph().forget_tuple = {o1, spec.forget.relation, o2};
    return std::move(b.graph());
}

std::vector<std::string> validate(const RelationGraph& graph) {
    std::vector<std::string> report;
    std::set<std::string> ids;
    for (const auto& n : graph.nodes) {
        if (!ids.insert(n.id).second) report.push_back("duplicate node id '" + n.id + "'");
        if (n.id.empty()) report.push_back("node with empty id");
        if (n.label.empty()) report.push_back("empty label on node '" + n.id + "'");
    }

    std::set<std::string> edge_ids;
    std::vector<const RelationEdge*> forget_edges;
    for (const auto& e : graph.edges) {
        if (!edge_ids.insert(e.id).second) report.push_back("duplicate edge id '" + e.id + "'");
        if (e.relation.empty()) report.push_back("empty relation on edge '" + e.id + "'");
        if (!graph.find_node(e.from)) report.push_back("edge '" + e.id + "' references missing node '" + e.from + "'");
        if (!graph.find_node(e.to)) report.push_back("edge '" + e.id + "' references missing node '" + e.to + "'");
        if (e.from == e.to) report.push_back("self-loop on edge '" + e.id + "'");
        if (e.loss_role == EdgeRole::kUnsafeForget) forget_edges.push_back(&e);
    }

    if (forget_edges.empty()) {
        report.push_back("no forget edge");
        return report;
    }
    if (forget_edges.size() > 1) {
        report.push_back("multiple forget edges");
        return report;
    }

    const RelationEdge& fe = *forget_edges.front();
    const ForgetTuple& ft = graph.forget_tuple;
    if (fe.from != ft.o1 || fe.to != ft.o2 || fe.relation != ft.relation) {
        report.push_back("forget tuple does not match the forget edge");
    }
    for (const auto& id : {fe.from, fe.to}) {
        const ObjectNode* n = graph.find_node(id);
        if (n && n->role != NodeRole::kForgetEndpoint) {
            report.push_back("forget edge endpoint '" + id + "' is not a forget-endpoint node");
        }
    }

    auto is_neighbor = [&](const std::string& id) {
        const ObjectNode* n = graph.find_node(id);
        return n && n->role == NodeRole::kPreservationNeighbor;
    };
    const bool has_safe_reuse = std::any_of(graph.edges.begin(), graph.edges.end(), [&](const RelationEdge& e) {
        if (e.loss_role != EdgeRole::kSafeEdgePull || e.relation != fe.relation) return false;
        return (e.from == fe.from && is_neighbor(e.to)) || (e.to == fe.to && is_neighbor(e.from));
    });
    if (!has_safe_reuse) report.push_back("no safe edge reusing the forget relation with a preservation neighbor");

    const bool has_alt = std::any_of(graph.edges.begin(), graph.edges.end(), [&](const RelationEdge& e) {
        const bool same_pair = (e.from == fe.from && e.to == fe.to) || (e.from == fe.to && e.to == fe.from);
        return same_pair && e.loss_role != EdgeRole::kUnsafeForget && e.relation != fe.relation;
    });
    if (!has_alt) report.push_back("no alternate relation between forget endpoints");

    return report;
}

RoleAssignment assign_roles(const RelationGraph& graph) {
    auto problems = validate(graph);
    if (!problems.empty()) {
        throw Error(ErrorCode::kInvalidGraph, "cannot assign roles on invalid graph: " + problems.front());
    }
    RoleAssignment roles;
    for (const auto& e : graph.edges) {
        switch (e.loss_role) {
            case EdgeRole::kUnsafeForget: roles.l3_edge = e.id; break;
            case EdgeRole::kSafeEdgePull: roles.l1_edges.push_back(e.id); break;
            case EdgeRole::kNeutralPull: roles.l4_edges.push_back(e.id); break;
        }
    }
    for (const auto& n : graph.nodes) {
        if (n.role != NodeRole::kNeutral) roles.l2_nodes.push_back(n.id);
    }
    return roles;
}

std::string emit_graph(const RelationGraph& graph) {
    ordered_json doc;
    doc["format"] = "relunlearn-graph";
    doc["version"] = 1;
    ordered_json nodes = ordered_json::array();
    for (const auto& n : graph.nodes) {
        nodes.push_back({{"id", n.id}, {"label", n.label}, {"role", to_string(n.role)}});
    }
    ordered_json edges = ordered_json::array();
    for (const auto& e : graph.edges) {
        edges.push_back({{"id", e.id},
                         {"relation", e.relation},
                         {"from", e.from},
                         {"to", e.to},
                         {"loss_role", to_string(e.loss_role)}});
    }
    doc["nodes"] = std::move(nodes);
    doc["edges"] = std::move(edges);
    doc["forget_tuple"] = {{"o1", graph.forget_tuple.o1},
                           {"r", graph.forget_tuple.relation},
                           {"o2", graph.forget_tuple.o2}};
    return doc.dump(2) + "\n";
}

namespace {

std::size_t line_of(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

const ordered_json& field(const ordered_json& obj, const char* key, const std::string& path) {
    if (!obj.is_object()) throw ParseError(0, path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(0, path + "." + key, "missing field");
    return *it;
}

std::string string_field(const ordered_json& obj, const char* key, const std::string& path) {
    const auto& v = field(obj, key, path);
    if (!v.is_string()) throw ParseError(0, path + "." + key, "expected a string");
    return v.get<std::string>();
}

}  // namespace

RelationGraph parse_graph(std::string_view text) {
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw ParseError(1, "", "empty graph manifest");
    }
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(line_of(text, e.byte > 0 ? e.byte - 1 : 0), "", e.what());
    }

    RelationGraph g;
    const auto& nodes = field(doc, "nodes", "$");
    if (!nodes.is_array()) throw ParseError(0, "$.nodes", "expected an array");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        std::string path = "$.nodes[" + std::to_string(i) + "]";
        ObjectNode n;
        n.id = string_field(nodes[i], "id", path);
        n.label = string_field(nodes[i], "label", path);
        auto role = parse_node_role(string_field(nodes[i], "role", path));
        if (!role) throw ParseError(0, path + ".role", "unknown node role");
        n.role = *role;
        g.nodes.push_back(std::move(n));
    }

    const auto& edges = field(doc, "edges", "$");
    if (!edges.is_array()) throw ParseError(0, "$.edges", "expected an array");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        std::string path = "$.edges[" + std::to_string(i) + "]";
        RelationEdge e;
        e.id = string_field(edges[i], "id", path);
        e.relation = string_field(edges[i], "relation", path);
        e.from = string_field(edges[i], "from", path);
        e.to = string_field(edges[i], "to", path);
        auto role = parse_edge_role(string_field(edges[i], "loss_role", path));
        if (!role) throw ParseError(0, path + ".loss_role", "unknown loss role");
        e.loss_role = *role;
        g.edges.push_back(std::move(e));
    }

    const auto& ft = field(doc, "forget_tuple", "$");
    g.forget_tuple.o1 = string_field(ft, "o1", "$.forget_tuple");
    g.forget_tuple.relation = string_field(ft, "r", "$.forget_tuple");
    g.forget_tuple.o2 = string_field(ft, "o2", "$.forget_tuple");
    return g;
}

RelationGraph load_graph(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open graph manifest '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_graph(ss.str());
}

void save_graph(const RelationGraph& graph, const std::string& path) {
    detail::write_bytes(path, emit_graph(graph), "graph manifest");
}

GraphSpec hamburger_spec() {
    GraphSpec spec;
    spec.forget = {"kid", "eating", "hamburger"};
    spec.subject_neighbors = {"adult"};
    spec.object_neighbors = {"salad"};
    spec.alt_relation = "holding";
    return spec;
}

}  // namespace relunlearn
