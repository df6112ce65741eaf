#ifndef FCG_GRAPH_HPP_
#define FCG_GRAPH_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace fcg {

using NodeId = std::uint32_t;

enum class NodeKind : std::uint8_t { System, User, Synthetic };

// Synthetic nodes behave like user nodes everywhere an operator cares
// about kind; the distinction only matters for perturbation accounting.
inline bool is_user_like(NodeKind k) { return k != NodeKind::System; }

struct NodeRecord {
    NodeId id = 0;
    NodeKind kind = NodeKind::User;
    std::string label;
    bool synthesized = false;

    friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

struct Edge {
    NodeId caller = 0;
    NodeId callee = 0;

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Simple directed call graph. Ordered containers keep every iteration
// order deterministic, which the reproducibility contract relies on.
class FunctionCallGraph {
public:
    FunctionCallGraph() = default;

    bool has_node(NodeId id) const { return nodes_.count(id) != 0; }
    bool has_edge(NodeId caller, NodeId callee) const;
    const NodeRecord& node(NodeId id) const;

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edge_count_; }

    const std::map<NodeId, NodeRecord>& nodes() const { return nodes_; }
    const std::set<NodeId>& out_edges(NodeId id) const;
    const std::set<NodeId>& in_edges(NodeId id) const;

    std::size_t out_degree(NodeId id) const { return out_edges(id).size(); }
    std::size_t in_degree(NodeId id) const { return in_edges(id).size(); }
    std::size_t degree(NodeId id) const { return out_degree(id) + in_degree(id); }

    bool is_user_node(NodeId id) const { return is_user_like(node(id).kind); }
    bool is_system_node(NodeId id) const { return node(id).kind == NodeKind::System; }

    // Identifier counter for synthesized nodes; never reused.
    NodeId peek_next_id() const { return next_id_; }
    NodeId allocate_id() { return next_id_++; }
    void bump_next_id(NodeId id);

    std::vector<Edge> sorted_edges() const;

    // Low-level mutators. Callers are responsible for operator-level
    // validity; these throw ValidationError only on invariant breakage
    // (dangling endpoint, self-loop, duplicate edge, system caller).
    void add_node(NodeRecord record);
    void add_edge(NodeId caller, NodeId callee);
    void remove_edge(NodeId caller, NodeId callee);
    void remove_node_isolated(NodeId id); // all incident edges must be gone

    // Full invariant re-check; throws ValidationError with the offender.
    void validate() const;

    friend bool operator==(const FunctionCallGraph& a, const FunctionCallGraph& b) {
        return a.nodes_ == b.nodes_ && a.out_ == b.out_;
    }

private:
    std::map<NodeId, NodeRecord> nodes_;
    std::map<NodeId, std::set<NodeId>> out_;
    std::map<NodeId, std::set<NodeId>> in_;
    std::size_t edge_count_ = 0;
    NodeId next_id_ = 0;
};

// Fixed-order list of sensitive API signatures; line order defines the
// feature position of each API for the whole run.
class SensitiveApiIndex {
public:
    SensitiveApiIndex() = default;
    explicit SensitiveApiIndex(std::vector<std::string> signatures);

    static SensitiveApiIndex load(std::istream& in);

    std::size_t size() const { return signatures_.size(); }
    const std::string& at(std::size_t i) const { return signatures_.at(i); }
    const std::vector<std::string>& signatures() const { return signatures_; }
    std::optional<std::size_t> position_of(const std::string& signature) const;

private:
    std::vector<std::string> signatures_;
    std::unordered_map<std::string, std::size_t> positions_;
};

struct CriticalArea {
    std::set<NodeId> node_ids;
    std::set<Edge> edge_ids;
    std::set<NodeId> anchor_apis;

    bool empty() const { return node_ids.empty(); }
};

enum class GraphFormat { JsonGraph, EdgeList };

FunctionCallGraph load_fcg(std::istream& in, GraphFormat format,
                           const std::vector<std::string>& system_prefixes = {});
void save_fcg(const FunctionCallGraph& g, std::ostream& out, GraphFormat format);

FunctionCallGraph load_fcg_file(const std::string& path, GraphFormat format,
                                const std::vector<std::string>& system_prefixes = {});
void save_fcg_file(const FunctionCallGraph& g, const std::string& path, GraphFormat format);

// Anchors are system nodes whose label appears in the index; the area is
// everything with a directed path into an anchor, plus every edge whose
// callee lies in the area. Empty anchor set yields an empty area.
CriticalArea identify_critical_area(const FunctionCallGraph& g, const SensitiveApiIndex& apis);

} // namespace fcg

#endif // FCG_GRAPH_HPP_
