#include "fcg/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fcg/errors.hpp"

namespace fcg {

namespace {

const std::set<NodeId> kEmptySet;

bool matches_any_prefix(const std::string& label, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes) {
        if (!p.empty() && label.rfind(p, 0) == 0) return true;
    }
    return false;
}

} // namespace

bool FunctionCallGraph::has_edge(NodeId caller, NodeId callee) const {
    auto it = out_.find(caller);
    return it != out_.end() && it->second.count(callee) != 0;
}

const NodeRecord& FunctionCallGraph::node(NodeId id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) {
        throw ValidationError("unknown node id " + std::to_string(id));
    }
    return it->second;
}

const std::set<NodeId>& FunctionCallGraph::out_edges(NodeId id) const {
    auto it = out_.find(id);
    return it == out_.end() ? kEmptySet : it->second;
}

const std::set<NodeId>& FunctionCallGraph::in_edges(NodeId id) const {
    auto it = in_.find(id);
    return it == in_.end() ? kEmptySet : it->second;
}

void FunctionCallGraph::bump_next_id(NodeId id) {
    if (id >= next_id_) next_id_ = id + 1;
}

void FunctionCallGraph::add_node(NodeRecord record) {
    if (nodes_.count(record.id) != 0) {
        throw ValidationError("duplicate node id " + std::to_string(record.id));
    }
    bump_next_id(record.id);
    const NodeId id = record.id;
    nodes_.emplace(id, std::move(record));
    out_.emplace(id, std::set<NodeId>{});
    in_.emplace(id, std::set<NodeId>{});
}

void FunctionCallGraph::add_edge(NodeId caller, NodeId callee) {
    if (!has_node(caller)) {
        throw ValidationError("edge caller " + std::to_string(caller) + " is not a node");
    }
    if (!has_node(callee)) {
        throw ValidationError("edge callee " + std::to_string(callee) + " is not a node");
    }
    if (caller == callee) {
        throw ValidationError("self-loop on node " + std::to_string(caller));
    }
    if (!is_user_like(nodes_.at(caller).kind)) {
        throw ValidationError("system node " + std::to_string(caller) + " cannot be a caller");
    }
    if (!out_[caller].insert(callee).second) {
        throw ValidationError("duplicate edge (" + std::to_string(caller) + "," +
                              std::to_string(callee) + ")");
    }
    in_[callee].insert(caller);
    ++edge_count_;
}

void FunctionCallGraph::remove_edge(NodeId caller, NodeId callee) {
    auto it = out_.find(caller);
    if (it == out_.end() || it->second.erase(callee) == 0) {
        throw ValidationError("missing edge (" + std::to_string(caller) + "," +
                              std::to_string(callee) + ")");
    }
    in_[callee].erase(caller);
    --edge_count_;
}

void FunctionCallGraph::remove_node_isolated(NodeId id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) {
        throw ValidationError("unknown node id " + std::to_string(id));
    }
    if (!out_[id].empty() || !in_[id].empty()) {
        throw ValidationError("node " + std::to_string(id) + " still has incident edges");
    }
    out_.erase(id);
    in_.erase(id);
    nodes_.erase(it);
}

std::vector<Edge> FunctionCallGraph::sorted_edges() const {
    std::vector<Edge> edges;
    edges.reserve(edge_count_);
    for (const auto& [caller, callees] : out_) {
        for (NodeId callee : callees) {
            edges.push_back({caller, callee});
        }
    }
    return edges; // out_ and its sets are ordered, so this is sorted
}

void FunctionCallGraph::validate() const {
    std::size_t counted = 0;
    for (const auto& [caller, callees] : out_) {
        if (!nodes_.count(caller)) {
            throw ValidationError("dangling caller " + std::to_string(caller));
        }
        if (!callees.empty() && !is_user_like(nodes_.at(caller).kind)) {
            throw ValidationError("system node " + std::to_string(caller) + " has out-edges");
        }
        for (NodeId callee : callees) {
            if (!nodes_.count(callee)) {
                throw ValidationError("dangling callee " + std::to_string(callee));
            }
            if (callee == caller) {
                throw ValidationError("self-loop on node " + std::to_string(caller));
            }
            auto in_it = in_.find(callee);
            if (in_it == in_.end() || !in_it->second.count(caller)) {
                throw ValidationError("asymmetric adjacency at (" + std::to_string(caller) +
                                      "," + std::to_string(callee) + ")");
            }
            ++counted;
        }
    }
    if (counted != edge_count_) {
        throw ValidationError("edge count mismatch");
    }
    for (const auto& [id, rec] : nodes_) {
        if (rec.id != id) {
            throw ValidationError("node record id mismatch at " + std::to_string(id));
        }
        if (id >= next_id_) {
            throw ValidationError("node id above next_id counter");
        }
    }
}

SensitiveApiIndex::SensitiveApiIndex(std::vector<std::string> signatures)
    : signatures_(std::move(signatures)) {
    for (std::size_t i = 0; i < signatures_.size(); ++i) {
        auto [it, inserted] = positions_.emplace(signatures_[i], i);
        (void)it;
        if (!inserted) {
            throw ParseError("duplicate sensitive API signature: " + signatures_[i]);
        }
    }
}

SensitiveApiIndex SensitiveApiIndex::load(std::istream& in) {
    std::vector<std::string> signatures;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        signatures.push_back(line);
    }
    return SensitiveApiIndex(std::move(signatures));
}

std::optional<std::size_t> SensitiveApiIndex::position_of(const std::string& signature) const {
    auto it = positions_.find(signature);
    if (it == positions_.end()) return std::nullopt;
    return it->second;
}

namespace {

FunctionCallGraph load_json_graph(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
    if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges")) {
        throw ParseError("expected object with \"nodes\" and \"edges\"");
    }

    FunctionCallGraph g;
    try {
        for (const auto& n : doc.at("nodes")) {
            NodeRecord rec;
            rec.id = n.at("id").get<NodeId>();
            const std::string kind = n.at("kind").get<std::string>();
            if (kind == "system") {
                rec.kind = NodeKind::System;
            } else if (kind == "user") {
                rec.kind = NodeKind::User;
            } else {
                throw ParseError("unknown node kind \"" + kind + "\"");
            }
            rec.label = n.value("label", std::string{});
            g.add_node(std::move(rec));
        }
        for (const auto& e : doc.at("edges")) {
            if (!e.is_array() || e.size() != 2) {
                throw ParseError("edge entries must be [caller, callee] pairs");
            }
            const NodeId caller = e.at(0).get<NodeId>();
            const NodeId callee = e.at(1).get<NodeId>();
            if (g.has_edge(caller, callee)) {
                continue; // duplicate input edges collapse to one call relation
            }
            g.add_edge(caller, callee);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
    g.validate();
    return g;
}

FunctionCallGraph load_edge_list(std::istream& in, const std::vector<std::string>& prefixes) {
    FunctionCallGraph g;
    std::map<std::string, NodeId> by_label;

    auto intern = [&](const std::string& label) {
        auto it = by_label.find(label);
        if (it != by_label.end()) return it->second;
        NodeRecord rec;
        rec.id = g.peek_next_id();
        rec.kind = matches_any_prefix(label, prefixes) ? NodeKind::System : NodeKind::User;
        rec.label = label;
        const NodeId id = rec.id;
        g.add_node(std::move(rec));
        by_label.emplace(label, id);
        return id;
    };

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string caller_label, callee_label, extra;
        if (!(ls >> caller_label >> callee_label) || (ls >> extra)) {
            throw ParseError("edge list line " + std::to_string(lineno) +
                             ": expected \"caller_label callee_label\"");
        }
        const NodeId caller = intern(caller_label);
        const NodeId callee = intern(callee_label);
        if (caller == callee || g.has_edge(caller, callee)) continue;
        g.add_edge(caller, callee);
    }
    g.validate();
    return g;
}

} // namespace

FunctionCallGraph load_fcg(std::istream& in, GraphFormat format,
                           const std::vector<std::string>& system_prefixes) {
    switch (format) {
    case GraphFormat::JsonGraph:
        return load_json_graph(in);
    case GraphFormat::EdgeList:
        return load_edge_list(in, system_prefixes);
    }
    throw ParseError("unknown graph format");
}

void save_fcg(const FunctionCallGraph& g, std::ostream& out, GraphFormat format) {
    if (format == GraphFormat::EdgeList) {
        for (const Edge& e : g.sorted_edges()) {
            out << g.node(e.caller).label << ' ' << g.node(e.callee).label << '\n';
        }
        return;
    }
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& [id, rec] : g.nodes()) {
        nodes.push_back({{"id", id},
                         {"kind", rec.kind == NodeKind::System ? "system" : "user"},
                         {"label", rec.label}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const Edge& e : g.sorted_edges()) {
        edges.push_back({e.caller, e.callee});
    }
    nlohmann::json doc{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
    out << doc.dump(2) << '\n';
}

FunctionCallGraph load_fcg_file(const std::string& path, GraphFormat format,
                                const std::vector<std::string>& system_prefixes) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return load_fcg(in, format, system_prefixes);
}

void save_fcg_file(const FunctionCallGraph& g, const std::string& path, GraphFormat format) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    save_fcg(g, out, format);
}

CriticalArea identify_critical_area(const FunctionCallGraph& g, const SensitiveApiIndex& apis) {
    CriticalArea area;
    for (const auto& [id, rec] : g.nodes()) {
        if (rec.kind == NodeKind::System && apis.position_of(rec.label)) {
            area.anchor_apis.insert(id);
        }
    }
    if (area.anchor_apis.empty()) return area;

    // Backward traversal: everything that can reach an anchor.
    std::deque<NodeId> frontier(area.anchor_apis.begin(), area.anchor_apis.end());
    area.node_ids = area.anchor_apis;
    while (!frontier.empty()) {
        const NodeId v = frontier.front();
        frontier.pop_front();
        for (NodeId caller : g.in_edges(v)) {
            if (area.node_ids.insert(caller).second) {
                frontier.push_back(caller);
            }
        }
    }
    for (NodeId v : area.node_ids) {
        for (NodeId caller : g.in_edges(v)) {
            area.edge_ids.insert({caller, v});
        }
    }
    return area;
}

} // namespace fcg
