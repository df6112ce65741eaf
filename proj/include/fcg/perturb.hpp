#ifndef FCG_PERTURB_HPP_
#define FCG_PERTURB_HPP_

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fcg/graph.hpp"
#include "fcg/rng.hpp"

namespace fcg {

// The seven graph edit operators. New node ids are fixed at construction
// time so a sequence replays identically on the base graph.
struct AddNodeOp {
    NodeId caller = 0;
    NodeId new_id = 0;
    friend bool operator==(const AddNodeOp&, const AddNodeOp&) = default;
};

struct AddEdgeOp {
    NodeId caller = 0;
    NodeId callee = 0;
    friend bool operator==(const AddEdgeOp&, const AddEdgeOp&) = default;
};

struct RewireOp {
    NodeId caller = 0; // edge (caller, callee) is removed
    NodeId callee = 0;
    NodeId mid = 0;
    friend bool operator==(const RewireOp&, const RewireOp&) = default;
};

struct RemoveNodeOp {
    NodeId target = 0;
    friend bool operator==(const RemoveNodeOp&, const RemoveNodeOp&) = default;
};

struct AddSparseNodesOp {
    NodeId anchor = 0;
    std::vector<NodeId> new_ids; // k = new_ids.size()
    friend bool operator==(const AddSparseNodesOp&, const AddSparseNodesOp&) = default;
};

struct AddDenseNodesOp {
    NodeId anchor = 0;
    std::vector<NodeId> new_ids;
    friend bool operator==(const AddDenseNodesOp&, const AddDenseNodesOp&) = default;
};

struct AddLongEdgesOp {
    NodeId source = 0;           // user node a
    NodeId target = 0;           // system node f
    std::size_t chain_len = 1;   // k nodes per chain
    std::vector<NodeId> new_ids; // m * chain_len fresh ids
    std::size_t chains() const { return chain_len == 0 ? 0 : new_ids.size() / chain_len; }
    friend bool operator==(const AddLongEdgesOp&, const AddLongEdgesOp&) = default;
};

using PerturbationOp = std::variant<AddNodeOp, AddEdgeOp, RewireOp, RemoveNodeOp,
                                    AddSparseNodesOp, AddDenseNodesOp, AddLongEdgesOp>;

const char* op_name(const PerturbationOp& op);

enum class ValidityKind { MissingNode, MissingEdge, DuplicateEdge, KindViolation };

struct ValidityError {
    ValidityKind kind = ValidityKind::MissingNode;
    std::string detail; // names the offending element
};

// Optional anchor set: when present, RemoveNode refuses to strip the last
// call into any anchor API (the sensitive call being hidden must survive).
struct ApplyContext {
    const std::set<NodeId>* anchors = nullptr;
};

std::optional<ValidityError> validate_op(const FunctionCallGraph& g, const PerturbationOp& op,
                                         const ApplyContext& ctx = {});

// Applies op in place; the graph is untouched when an error is returned.
std::optional<ValidityError> apply_op(FunctionCallGraph& g, const PerturbationOp& op,
                                      const ApplyContext& ctx = {});

// Process-wide apply_op invocation count, for search budget accounting.
std::uint64_t apply_op_invocations();

struct SequenceFailure {
    std::size_t index = 0;
    ValidityError error;
};

// Left-fold of apply_op over a copy of g; the input graph is never touched.
std::variant<FunctionCallGraph, SequenceFailure>
apply_sequence(const FunctionCallGraph& g, std::span<const PerturbationOp> ops,
               const ApplyContext& ctx = {});

struct ElementSet {
    std::set<NodeId> nodes;
    std::set<Edge> edges;

    bool intersects(const ElementSet& other) const;
};

struct UseDefSet {
    ElementSet defines;
    ElementSet uses;
    ElementSet kills;
};

UseDefSet use_def(const PerturbationOp& op);

// True iff `later` uses a node or edge that `earlier` defines or kills.
bool has_dependency(const PerturbationOp& earlier, const PerturbationOp& later);

struct OpWeights {
    double add_node = 1.0;
    double add_edge = 1.0;
    double rewire = 1.0;
    double remove_node = 1.0;
    double add_sparse_nodes = 1.0;
    double add_dense_nodes = 1.0;
    double add_long_edges = 1.0;
};

struct OpRanges {
    int sparse_k_min = 2;
    int sparse_k_max = 16;
    int long_m_min = 1;
    int long_m_max = 4;
    int long_k_min = 2;
    int long_k_max = 8;
};

// Draws an operator valid against g_state whose targets come from the
// critical area (synthetic nodes created by earlier ops also qualify).
// Throws NoValidOp when the bounded retry budget is exhausted.
PerturbationOp random_op(const FunctionCallGraph& g_state, const CriticalArea& area,
                         const OpWeights& weights, const OpRanges& ranges, Rng& rng);

// Candidate pools used by the generator and by sequence repair: user-kind
// nodes of the area plus synthetic nodes present in g_state, and anchor
// system nodes still present in g_state.
std::vector<NodeId> critical_user_pool(const FunctionCallGraph& g_state,
                                       const CriticalArea& area);
std::vector<NodeId> critical_anchor_pool(const FunctionCallGraph& g_state,
                                         const CriticalArea& area);

// Code-level translation record: one tab-separated directive per code
// transformation, with a comment header. See docs/perturbation_script.md.
std::string translate_to_script(std::span<const PerturbationOp> ops);

// Synthetic ids introduced by an op (newly created node ids).
std::vector<NodeId> defined_node_ids(const PerturbationOp& op);

// Rewrites node references through the given id map (used for synthetic
// id renaming during crossover).
PerturbationOp remap_node_ids(const PerturbationOp& op,
                              const std::map<NodeId, NodeId>& mapping);

} // namespace fcg

#endif // FCG_PERTURB_HPP_
