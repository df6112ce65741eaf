#include "fcg/perturb.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "fcg/errors.hpp"

namespace fcg {

namespace {
std::atomic<std::uint64_t> g_apply_op_count{0};
} // namespace

std::uint64_t apply_op_invocations() {
    return g_apply_op_count.load(std::memory_order_relaxed);
}

namespace {

std::string node_str(NodeId id) { return std::to_string(id); }
std::string edge_str(NodeId a, NodeId b) {
    return "(" + std::to_string(a) + "," + std::to_string(b) + ")";
}

std::optional<ValidityError> err(ValidityKind kind, std::string detail) {
    return ValidityError{kind, std::move(detail)};
}

std::optional<ValidityError> require_user_node(const FunctionCallGraph& g, NodeId id,
                                               const char* role) {
    if (!g.has_node(id)) {
        return err(ValidityKind::MissingNode, std::string(role) + " node " + node_str(id));
    }
    if (!g.is_user_node(id)) {
        return err(ValidityKind::KindViolation,
                   std::string(role) + " node " + node_str(id) + " is a system node");
    }
    return std::nullopt;
}

std::optional<ValidityError> require_fresh_ids(const FunctionCallGraph& g,
                                               const std::vector<NodeId>& ids) {
    std::set<NodeId> seen;
    for (NodeId id : ids) {
        if (!seen.insert(id).second) {
            return err(ValidityKind::KindViolation, "repeated new id " + node_str(id));
        }
        if (g.has_node(id)) {
            return err(ValidityKind::KindViolation, "new id " + node_str(id) + " already exists");
        }
    }
    return std::nullopt;
}

NodeRecord synthetic_record(NodeId id) {
    NodeRecord rec;
    rec.id = id;
    rec.kind = NodeKind::Synthetic;
    rec.label = "syn." + std::to_string(id);
    rec.synthesized = true;
    return rec;
}

} // namespace

const char* op_name(const PerturbationOp& op) {
    switch (op.index()) {
    case 0: return "add_node";
    case 1: return "add_edge";
    case 2: return "rewire";
    case 3: return "remove_node";
    case 4: return "add_sparse_nodes";
    case 5: return "add_dense_nodes";
    case 6: return "add_long_edges";
    }
    return "unknown";
}

namespace {

std::optional<ValidityError> validate_impl(const FunctionCallGraph& g, const PerturbationOp& op,
                                           const ApplyContext& ctx) {
    if (const auto* o = std::get_if<AddNodeOp>(&op)) {
        if (auto e = require_user_node(g, o->caller, "caller")) return e;
        return require_fresh_ids(g, {o->new_id});
    }
    if (const auto* o = std::get_if<AddEdgeOp>(&op)) {
        if (auto e = require_user_node(g, o->caller, "caller")) return e;
        if (!g.has_node(o->callee)) {
            return err(ValidityKind::MissingNode, "callee node " + node_str(o->callee));
        }
        if (o->caller == o->callee) {
            return err(ValidityKind::KindViolation, "self-loop " + edge_str(o->caller, o->callee));
        }
        if (g.has_edge(o->caller, o->callee)) {
            return err(ValidityKind::DuplicateEdge, "edge " + edge_str(o->caller, o->callee));
        }
        return std::nullopt;
    }
    if (const auto* o = std::get_if<RewireOp>(&op)) {
        if (!g.has_edge(o->caller, o->callee)) {
            return err(ValidityKind::MissingEdge, "edge " + edge_str(o->caller, o->callee));
        }
        if (auto e = require_user_node(g, o->mid, "mid")) return e;
        if (o->mid == o->caller || o->mid == o->callee) {
            return err(ValidityKind::KindViolation,
                       "mid node " + node_str(o->mid) + " coincides with an endpoint");
        }
        if (g.has_edge(o->caller, o->mid)) {
            return err(ValidityKind::DuplicateEdge, "edge " + edge_str(o->caller, o->mid));
        }
        if (g.has_edge(o->mid, o->callee)) {
            return err(ValidityKind::DuplicateEdge, "edge " + edge_str(o->mid, o->callee));
        }
        return std::nullopt;
    }
    if (const auto* o = std::get_if<RemoveNodeOp>(&op)) {
        if (auto e = require_user_node(g, o->target, "target")) return e;
        if (ctx.anchors != nullptr && g.in_edges(o->target).empty()) {
            // With no callers to bridge through, removal erases every call
            // the target makes; refuse when that would orphan an anchor.
            for (NodeId callee : g.out_edges(o->target)) {
                if (ctx.anchors->count(callee) != 0 && g.in_edges(callee).size() == 1) {
                    return err(ValidityKind::KindViolation,
                               "removing " + node_str(o->target) +
                                   " would disconnect anchor " + node_str(callee));
                }
            }
        }
        return std::nullopt;
    }
    if (const auto* o = std::get_if<AddSparseNodesOp>(&op)) {
        if (auto e = require_user_node(g, o->anchor, "anchor")) return e;
        if (o->new_ids.empty()) {
            return err(ValidityKind::KindViolation, "add_sparse_nodes with k = 0");
        }
        return require_fresh_ids(g, o->new_ids);
    }
    if (const auto* o = std::get_if<AddDenseNodesOp>(&op)) {
        if (auto e = require_user_node(g, o->anchor, "anchor")) return e;
        if (o->new_ids.empty()) {
            return err(ValidityKind::KindViolation, "add_dense_nodes with k = 0");
        }
        return require_fresh_ids(g, o->new_ids);
    }
    const auto& o = std::get<AddLongEdgesOp>(op);
    if (auto e = require_user_node(g, o.source, "source")) return e;
    if (!g.has_node(o.target)) {
        return err(ValidityKind::MissingNode, "target node " + node_str(o.target));
    }
    if (!g.is_system_node(o.target)) {
        return err(ValidityKind::KindViolation,
                   "target node " + node_str(o.target) + " is not a system node");
    }
    if (o.chain_len == 0 || o.new_ids.empty() || o.new_ids.size() % o.chain_len != 0) {
        return err(ValidityKind::KindViolation, "add_long_edges with malformed chain ids");
    }
    return require_fresh_ids(g, o.new_ids);
}

void apply_impl(FunctionCallGraph& g, const PerturbationOp& op) {
    if (const auto* o = std::get_if<AddNodeOp>(&op)) {
        g.add_node(synthetic_record(o->new_id));
        g.add_edge(o->caller, o->new_id);
        return;
    }
    if (const auto* o = std::get_if<AddEdgeOp>(&op)) {
        g.add_edge(o->caller, o->callee);
        return;
    }
    if (const auto* o = std::get_if<RewireOp>(&op)) {
        g.remove_edge(o->caller, o->callee);
        g.add_edge(o->caller, o->mid);
        g.add_edge(o->mid, o->callee);
        return;
    }
    if (const auto* o = std::get_if<RemoveNodeOp>(&op)) {
        const std::vector<NodeId> callers(g.in_edges(o->target).begin(),
                                          g.in_edges(o->target).end());
        const std::vector<NodeId> callees(g.out_edges(o->target).begin(),
                                          g.out_edges(o->target).end());
        for (NodeId h : callers) g.remove_edge(h, o->target);
        for (NodeId c : callees) g.remove_edge(o->target, c);
        g.remove_node_isolated(o->target);
        for (NodeId h : callers) {
            for (NodeId c : callees) {
                if (h != c && !g.has_edge(h, c)) g.add_edge(h, c);
            }
        }
        return;
    }
    if (const auto* o = std::get_if<AddSparseNodesOp>(&op)) {
        for (NodeId id : o->new_ids) {
            g.add_node(synthetic_record(id));
            g.add_edge(o->anchor, id);
        }
        return;
    }
    if (const auto* o = std::get_if<AddDenseNodesOp>(&op)) {
        for (NodeId id : o->new_ids) {
            g.add_node(synthetic_record(id));
            g.add_edge(o->anchor, id);
        }
        for (std::size_t i = 0; i < o->new_ids.size(); ++i) {
            for (std::size_t j = i + 1; j < o->new_ids.size(); ++j) {
                g.add_edge(o->new_ids[i], o->new_ids[j]);
            }
        }
        return;
    }
    const auto& o = std::get<AddLongEdgesOp>(op);
    for (std::size_t chain = 0; chain < o.chains(); ++chain) {
        const NodeId* ids = &o.new_ids[chain * o.chain_len];
        for (std::size_t i = 0; i < o.chain_len; ++i) {
            g.add_node(synthetic_record(ids[i]));
        }
        g.add_edge(o.source, ids[0]);
        for (std::size_t i = 0; i + 1 < o.chain_len; ++i) {
            g.add_edge(ids[i], ids[i + 1]);
        }
        g.add_edge(ids[o.chain_len - 1], o.target);
    }
}

} // namespace

std::optional<ValidityError> validate_op(const FunctionCallGraph& g, const PerturbationOp& op,
                                         const ApplyContext& ctx) {
    return validate_impl(g, op, ctx);
}

std::optional<ValidityError> apply_op(FunctionCallGraph& g, const PerturbationOp& op,
                                      const ApplyContext& ctx) {
    g_apply_op_count.fetch_add(1, std::memory_order_relaxed);
    if (auto e = validate_impl(g, op, ctx)) return e;
    apply_impl(g, op);
    return std::nullopt;
}

std::variant<FunctionCallGraph, SequenceFailure>
apply_sequence(const FunctionCallGraph& g, std::span<const PerturbationOp> ops,
               const ApplyContext& ctx) {
    FunctionCallGraph work = g;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        if (auto e = apply_op(work, ops[i], ctx)) {
            return SequenceFailure{i, std::move(*e)};
        }
    }
    return work;
}

bool ElementSet::intersects(const ElementSet& other) const {
    for (NodeId id : nodes) {
        if (other.nodes.count(id)) return true;
    }
    for (const Edge& e : edges) {
        if (other.edges.count(e)) return true;
    }
    return false;
}

UseDefSet use_def(const PerturbationOp& op) {
    UseDefSet ud;
    if (const auto* o = std::get_if<AddNodeOp>(&op)) {
        ud.uses.nodes = {o->caller};
        ud.defines.nodes = {o->new_id};
        ud.defines.edges = {{o->caller, o->new_id}};
    } else if (const auto* o = std::get_if<AddEdgeOp>(&op)) {
        ud.uses.nodes = {o->caller, o->callee};
        ud.defines.edges = {{o->caller, o->callee}};
    } else if (const auto* o = std::get_if<RewireOp>(&op)) {
        ud.uses.nodes = {o->caller, o->callee, o->mid};
        ud.uses.edges = {{o->caller, o->callee}};
        ud.defines.edges = {{o->caller, o->mid}, {o->mid, o->callee}};
        ud.kills.edges = {{o->caller, o->callee}};
    } else if (const auto* o = std::get_if<RemoveNodeOp>(&op)) {
        ud.uses.nodes = {o->target};
        ud.kills.nodes = {o->target};
    } else if (const auto* o = std::get_if<AddSparseNodesOp>(&op)) {
        ud.uses.nodes = {o->anchor};
        for (NodeId id : o->new_ids) {
            ud.defines.nodes.insert(id);
            ud.defines.edges.insert({o->anchor, id});
        }
    } else if (const auto* o = std::get_if<AddDenseNodesOp>(&op)) {
        ud.uses.nodes = {o->anchor};
        for (NodeId id : o->new_ids) {
            ud.defines.nodes.insert(id);
            ud.defines.edges.insert({o->anchor, id});
        }
        for (std::size_t i = 0; i < o->new_ids.size(); ++i) {
            for (std::size_t j = i + 1; j < o->new_ids.size(); ++j) {
                ud.defines.edges.insert({o->new_ids[i], o->new_ids[j]});
            }
        }
    } else {
        const auto& le = std::get<AddLongEdgesOp>(op);
        ud.uses.nodes = {le.source, le.target};
        for (std::size_t chain = 0; chain < le.chains(); ++chain) {
            const NodeId* ids = &le.new_ids[chain * le.chain_len];
            for (std::size_t i = 0; i < le.chain_len; ++i) {
                ud.defines.nodes.insert(ids[i]);
            }
            ud.defines.edges.insert({le.source, ids[0]});
            for (std::size_t i = 0; i + 1 < le.chain_len; ++i) {
                ud.defines.edges.insert({ids[i], ids[i + 1]});
            }
            ud.defines.edges.insert({ids[le.chain_len - 1], le.target});
        }
    }
    return ud;
}

bool has_dependency(const PerturbationOp& earlier, const PerturbationOp& later) {
    const UseDefSet e = use_def(earlier);
    const UseDefSet l = use_def(later);
    return l.uses.intersects(e.defines) || l.uses.intersects(e.kills);
}

std::vector<NodeId> critical_user_pool(const FunctionCallGraph& g, const CriticalArea& area) {
    std::vector<NodeId> pool;
    for (const auto& [id, rec] : g.nodes()) {
        if (!is_user_like(rec.kind)) continue;
        if (rec.synthesized || area.node_ids.count(id)) pool.push_back(id);
    }
    return pool;
}

std::vector<NodeId> critical_anchor_pool(const FunctionCallGraph& g, const CriticalArea& area) {
    std::vector<NodeId> pool;
    for (NodeId id : area.anchor_apis) {
        if (g.has_node(id)) pool.push_back(id);
    }
    return pool;
}

namespace {

template <typename T>
const T& pick(const std::vector<T>& pool, Rng& rng) {
    return pool[rng.uniform_index(pool.size())];
}

std::vector<NodeId> fresh_ids(const FunctionCallGraph& g, std::size_t count) {
    std::vector<NodeId> ids(count);
    NodeId next = g.peek_next_id();
    for (auto& id : ids) id = next++;
    return ids;
}

} // namespace

PerturbationOp random_op(const FunctionCallGraph& g_state, const CriticalArea& area,
                         const OpWeights& weights, const OpRanges& ranges, Rng& rng) {
    if (area.empty()) {
        throw NoValidOp("critical area is empty");
    }
    const std::vector<NodeId> users = critical_user_pool(g_state, area);
    const std::vector<NodeId> anchors = critical_anchor_pool(g_state, area);
    std::vector<NodeId> base_users, synth_users;
    for (NodeId id : users) {
        (g_state.node(id).synthesized ? synth_users : base_users).push_back(id);
    }

    // Callers lean on original area nodes so dependency chains stay short;
    // callees lean on original nodes and anchors so edges mostly land on
    // feature-relevant targets.
    auto draw_user = [&](double synth_share) -> NodeId {
        if (synth_users.empty()) return pick(base_users, rng);
        if (base_users.empty()) return pick(synth_users, rng);
        return rng.bernoulli(synth_share) ? pick(synth_users, rng) : pick(base_users, rng);
    };
    auto draw_callee = [&]() -> NodeId {
        if (!anchors.empty() && rng.bernoulli(0.4)) return pick(anchors, rng);
        return draw_user(0.2);
    };

    const double wsum = weights.add_node + weights.add_edge + weights.rewire +
                        weights.remove_node + weights.add_sparse_nodes +
                        weights.add_dense_nodes + weights.add_long_edges;
    if (wsum <= 0.0) {
        throw NoValidOp("all operator weights are zero");
    }
    const ApplyContext ctx{&area.anchor_apis};

    constexpr int kOuterRetries = 64;
    constexpr int kInnerRetries = 8;
    for (int attempt = 0; attempt < kOuterRetries; ++attempt) {
        double roll = rng.uniform01() * wsum;
        int variant = 0;
        for (double w : {weights.add_node, weights.add_edge, weights.rewire,
                         weights.remove_node, weights.add_sparse_nodes,
                         weights.add_dense_nodes, weights.add_long_edges}) {
            if (roll < w) break;
            roll -= w;
            ++variant;
        }
        if (variant > 6) variant = 6;

        for (int inner = 0; inner < kInnerRetries; ++inner) {
            std::optional<PerturbationOp> candidate;
            switch (variant) {
            case 0: {
                if (users.empty()) break;
                candidate = AddNodeOp{draw_user(0.5), g_state.peek_next_id()};
                break;
            }
            case 1: {
                if (users.empty()) break;
                candidate = AddEdgeOp{draw_user(0.5), draw_callee()};
                break;
            }
            case 2: {
                if (users.empty()) break;
                const NodeId caller = draw_user(0.5);
                const auto& outs = g_state.out_edges(caller);
                if (outs.empty()) break;
                // Uniform callee among the caller's in-area out-edges.
                std::vector<NodeId> targets;
                for (NodeId callee : outs) {
                    if (area.node_ids.count(callee) || g_state.node(callee).synthesized) {
                        targets.push_back(callee);
                    }
                }
                if (targets.empty()) break;
                candidate = RewireOp{caller, pick(targets, rng), draw_user(0.5)};
                break;
            }
            case 3: {
                if (users.empty()) break;
                candidate = RemoveNodeOp{draw_user(0.5)};
                break;
            }
            case 4: {
                if (users.empty()) break;
                const auto k = static_cast<std::size_t>(
                    rng.uniform_int(ranges.sparse_k_min, ranges.sparse_k_max));
                candidate = AddSparseNodesOp{draw_user(0.5), fresh_ids(g_state, k)};
                break;
            }
            case 5: {
                if (users.empty()) break;
                const auto k = static_cast<std::size_t>(
                    rng.uniform_int(ranges.sparse_k_min, ranges.sparse_k_max));
                candidate = AddDenseNodesOp{draw_user(0.5), fresh_ids(g_state, k)};
                break;
            }
            default: {
                if (users.empty() || anchors.empty()) break;
                const auto m = static_cast<std::size_t>(
                    rng.uniform_int(ranges.long_m_min, ranges.long_m_max));
                const auto k = static_cast<std::size_t>(
                    rng.uniform_int(ranges.long_k_min, ranges.long_k_max));
                candidate = AddLongEdgesOp{draw_user(0.5), pick(anchors, rng), k,
                                           fresh_ids(g_state, m * k)};
                break;
            }
            }
            if (candidate && !validate_op(g_state, *candidate, ctx)) {
                return *candidate;
            }
            if (!candidate) break; // pool empty; re-roll the variant
        }
    }
    throw NoValidOp("no valid operator found after bounded retries");
}

namespace {

void emit(std::ostringstream& out, const char* directive,
          std::initializer_list<std::pair<const char*, std::string>> kvs) {
    out << directive;
    for (const auto& [key, value] : kvs) {
        out << '\t' << key << '=' << value;
    }
    out << '\n';
}

} // namespace

std::string translate_to_script(std::span<const PerturbationOp> ops) {
    std::ostringstream out;
    out << "# perturbation script v1\n";
    out << "# one directive per code transformation; see docs/perturbation_script.md\n";
    for (const PerturbationOp& op : ops) {
        if (const auto* o = std::get_if<AddNodeOp>(&op)) {
            emit(out, "CREATE_FUNCTION", {{"id", node_str(o->new_id)}});
            emit(out, "INSERT_CALL",
                 {{"caller", node_str(o->caller)}, {"callee", node_str(o->new_id)}});
        } else if (const auto* o = std::get_if<AddEdgeOp>(&op)) {
            emit(out, "INSERT_GUARDED_CALL",
                 {{"caller", node_str(o->caller)},
                  {"callee", node_str(o->callee)},
                  {"condition", "skip_body"}});
        } else if (const auto* o = std::get_if<RewireOp>(&op)) {
            emit(out, "REDIRECT_CALL",
                 {{"caller", node_str(o->caller)},
                  {"old_callee", node_str(o->callee)},
                  {"new_callee", node_str(o->mid)}});
            emit(out, "INSERT_GUARDED_CALL",
                 {{"caller", node_str(o->mid)},
                  {"callee", node_str(o->callee)},
                  {"condition", "forward_from_redirect"}});
        } else if (const auto* o = std::get_if<RemoveNodeOp>(&op)) {
            emit(out, "INLINE_FUNCTION", {{"target", node_str(o->target)}});
            emit(out, "DELETE_FUNCTION", {{"id", node_str(o->target)}});
        } else if (const auto* o = std::get_if<AddSparseNodesOp>(&op)) {
            for (NodeId id : o->new_ids) {
                emit(out, "CREATE_FUNCTION", {{"id", node_str(id)}});
                emit(out, "INSERT_CALL",
                     {{"caller", node_str(o->anchor)}, {"callee", node_str(id)}});
            }
        } else if (const auto* o = std::get_if<AddDenseNodesOp>(&op)) {
            for (NodeId id : o->new_ids) {
                emit(out, "CREATE_FUNCTION", {{"id", node_str(id)}});
                emit(out, "INSERT_CALL",
                     {{"caller", node_str(o->anchor)}, {"callee", node_str(id)}});
            }
            for (std::size_t i = 0; i < o->new_ids.size(); ++i) {
                for (std::size_t j = i + 1; j < o->new_ids.size(); ++j) {
                    emit(out, "INSERT_GUARDED_CALL",
                         {{"caller", node_str(o->new_ids[i])},
                          {"callee", node_str(o->new_ids[j])},
                          {"condition", "skip_body"}});
                }
            }
        } else {
            const auto& le = std::get<AddLongEdgesOp>(op);
            for (std::size_t chain = 0; chain < le.chains(); ++chain) {
                const NodeId* ids = &le.new_ids[chain * le.chain_len];
                for (std::size_t i = 0; i < le.chain_len; ++i) {
                    emit(out, "CREATE_FUNCTION", {{"id", node_str(ids[i])}});
                }
                emit(out, "INSERT_GUARDED_CALL",
                     {{"caller", node_str(le.source)},
                      {"callee", node_str(ids[0])},
                      {"condition", "skip_body"}});
                for (std::size_t i = 0; i + 1 < le.chain_len; ++i) {
                    emit(out, "INSERT_CALL",
                         {{"caller", node_str(ids[i])}, {"callee", node_str(ids[i + 1])}});
                }
                emit(out, "INSERT_CALL",
                     {{"caller", node_str(ids[le.chain_len - 1])},
                      {"callee", node_str(le.target)}});
            }
        }
    }
    return out.str();
}

std::vector<NodeId> defined_node_ids(const PerturbationOp& op) {
    const UseDefSet ud = use_def(op);
    return {ud.defines.nodes.begin(), ud.defines.nodes.end()};
}

namespace {

NodeId mapped(const std::map<NodeId, NodeId>& mapping, NodeId id) {
    auto it = mapping.find(id);
    return it == mapping.end() ? id : it->second;
}

} // namespace

PerturbationOp remap_node_ids(const PerturbationOp& op,
                              const std::map<NodeId, NodeId>& mapping) {
    PerturbationOp out = op;
    if (auto* o = std::get_if<AddNodeOp>(&out)) {
        o->caller = mapped(mapping, o->caller);
        o->new_id = mapped(mapping, o->new_id);
    } else if (auto* o = std::get_if<AddEdgeOp>(&out)) {
        o->caller = mapped(mapping, o->caller);
        o->callee = mapped(mapping, o->callee);
    } else if (auto* o = std::get_if<RewireOp>(&out)) {
        o->caller = mapped(mapping, o->caller);
        o->callee = mapped(mapping, o->callee);
        o->mid = mapped(mapping, o->mid);
    } else if (auto* o = std::get_if<RemoveNodeOp>(&out)) {
        o->target = mapped(mapping, o->target);
    } else if (auto* o = std::get_if<AddSparseNodesOp>(&out)) {
        o->anchor = mapped(mapping, o->anchor);
        for (auto& id : o->new_ids) id = mapped(mapping, id);
    } else if (auto* o = std::get_if<AddDenseNodesOp>(&out)) {
        o->anchor = mapped(mapping, o->anchor);
        for (auto& id : o->new_ids) id = mapped(mapping, id);
    } else {
        auto& le = std::get<AddLongEdgesOp>(out);
        le.source = mapped(mapping, le.source);
        le.target = mapped(mapping, le.target);
        for (auto& id : le.new_ids) id = mapped(mapping, id);
    }
    return out;
}

} // namespace fcg
