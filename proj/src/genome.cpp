#include "fcg/genome.hpp"

#include <algorithm>
#include <numeric>

#include "fcg/errors.hpp"

namespace fcg {

void SubSequence::recompute_footprint() {
    footprint = UseDefSet{};
    for (const PerturbationOp& op : ops) {
        const UseDefSet ud = use_def(op);
        footprint.defines.nodes.insert(ud.defines.nodes.begin(), ud.defines.nodes.end());
        footprint.defines.edges.insert(ud.defines.edges.begin(), ud.defines.edges.end());
        footprint.uses.nodes.insert(ud.uses.nodes.begin(), ud.uses.nodes.end());
        footprint.uses.edges.insert(ud.uses.edges.begin(), ud.uses.edges.end());
        footprint.kills.nodes.insert(ud.kills.nodes.begin(), ud.kills.nodes.end());
        footprint.kills.edges.insert(ud.kills.edges.begin(), ud.kills.edges.end());
    }
}

std::vector<PerturbationOp> Individual::flatten() const {
    std::vector<PerturbationOp> flat;
    flat.reserve(op_count());
    for (const SubSequence& sub : sub_sequences) {
        flat.insert(flat.end(), sub.ops.begin(), sub.ops.end());
    }
    return flat;
}

std::size_t Individual::op_count() const {
    std::size_t n = 0;
    for (const SubSequence& sub : sub_sequences) n += sub.ops.size();
    return n;
}

namespace {

Individual build_individual(std::vector<std::vector<std::size_t>> groups,
                            const std::vector<PerturbationOp>& ops) {
    Individual ind;
    for (auto& group : groups) {
        SubSequence sub;
        sub.ops.reserve(group.size());
        for (std::size_t idx : group) sub.ops.push_back(ops[idx]);
        sub.recompute_footprint();
        ind.sub_sequences.push_back(std::move(sub));
    }
    return ind;
}

Individual single_group(const std::vector<PerturbationOp>& ops) {
    Individual ind;
    if (ops.empty()) return ind;
    SubSequence sub;
    sub.ops = ops;
    sub.recompute_footprint();
    ind.sub_sequences.push_back(std::move(sub));
    return ind;
}

bool groups_conflict(const SubSequence& a, const SubSequence& b) {
    return b.footprint.uses.intersects(a.footprint.defines) ||
           b.footprint.uses.intersects(a.footprint.kills) ||
           a.footprint.uses.intersects(b.footprint.defines) ||
           a.footprint.uses.intersects(b.footprint.kills);
}

} // namespace

bool replays_cleanly(const GenomeContext& ctx, const Individual& ind) {
    const auto flat = ind.flatten();
    return std::holds_alternative<FunctionCallGraph>(
        apply_sequence(*ctx.base, flat, ctx.apply_ctx()));
}

Individual group_dependencies(const GenomeContext& ctx, std::vector<PerturbationOp> ops) {
    if (std::holds_alternative<SequenceFailure>(
            apply_sequence(*ctx.base, ops, ctx.apply_ctx()))) {
        throw InvalidSequence("sequence does not apply cleanly to the base graph");
    }
    if (ops.empty()) return Individual{};

    std::vector<std::vector<std::size_t>> groups;
    if (!ctx.dependency_aware) {
        for (std::size_t i = 0; i < ops.size(); ++i) groups.push_back({i});
        return build_individual(std::move(groups), ops);
    }

    // Greedy first-match grouping over the ordered sequence.
    for (std::size_t oi = 0; oi < ops.size(); ++oi) {
        bool placed = false;
        for (auto& group : groups) {
            for (std::size_t member : group) {
                if (has_dependency(ops[member], ops[oi])) {
                    group.push_back(oi);
                    placed = true;
                    break;
                }
            }
            if (placed) break;
        }
        if (!placed) groups.push_back({oi});
    }

    // First-match can split a chain whose tail also depends on a later
    // group; merge groups until no op uses an element another group
    // defines or kills.
    Individual ind = build_individual(std::move(groups), ops);
    bool merged = true;
    while (merged) {
        merged = false;
        for (std::size_t i = 0; i < ind.sub_sequences.size() && !merged; ++i) {
            for (std::size_t j = i + 1; j < ind.sub_sequences.size() && !merged; ++j) {
                if (!groups_conflict(ind.sub_sequences[i], ind.sub_sequences[j])) continue;
                auto& dst = ind.sub_sequences[i].ops;
                auto& src = ind.sub_sequences[j].ops;
                dst.insert(dst.end(), src.begin(), src.end());
                ind.sub_sequences.erase(ind.sub_sequences.begin() +
                                        static_cast<std::ptrdiff_t>(j));
                ind.sub_sequences[i].recompute_footprint();
                merged = true;
            }
        }
    }

    // Merging concatenates member runs, which keeps each original run in
    // order but may interleave differently than the source sequence; the
    // use-def analysis cannot see edges recreated by RemoveNode bridging,
    // so verify and fall back to one atomic group if replay broke.
    if (!replays_cleanly(ctx, ind)) {
        return single_group(ops);
    }
    return ind;
}

Individual init_individual(const GenomeContext& ctx, std::size_t n_ops, Rng& rng) {
    FunctionCallGraph work = *ctx.base;
    const ApplyContext actx = ctx.apply_ctx();
    std::vector<PerturbationOp> ops;
    ops.reserve(n_ops);
    for (std::size_t i = 0; i < n_ops; ++i) {
        PerturbationOp op = random_op(work, *ctx.area, ctx.weights, ctx.ranges, rng);
        if (auto e = apply_op(work, op, actx)) {
            throw InvalidSequence("generated operator failed to apply: " + e->detail);
        }
        ops.push_back(std::move(op));
    }
    return group_dependencies(ctx, std::move(ops));
}

namespace {

// Re-draws the invalid references of a failing op against the replayed
// state, keeping its shape (variant and size parameters).
std::optional<PerturbationOp> try_retarget(const PerturbationOp& op,
                                           const FunctionCallGraph& state,
                                           const GenomeContext& ctx, Rng& rng) {
    const std::vector<NodeId> users = critical_user_pool(state, *ctx.area);
    const std::vector<NodeId> anchors = critical_anchor_pool(state, *ctx.area);
    std::vector<NodeId> callees = users;
    callees.insert(callees.end(), anchors.begin(), anchors.end());
    if (users.empty()) return std::nullopt;
    const ApplyContext actx = ctx.apply_ctx();

    auto draw = [&](const std::vector<NodeId>& pool) {
        return pool[rng.uniform_index(pool.size())];
    };

    constexpr int kTries = 8;
    for (int t = 0; t < kTries; ++t) {
        PerturbationOp candidate = op;
        if (auto* o = std::get_if<AddNodeOp>(&candidate)) {
            o->caller = draw(users);
            o->new_id = state.peek_next_id();
        } else if (auto* o = std::get_if<AddEdgeOp>(&candidate)) {
            o->caller = draw(users);
            o->callee = draw(callees);
        } else if (auto* o = std::get_if<RewireOp>(&candidate)) {
            const NodeId caller = draw(users);
            const auto& outs = state.out_edges(caller);
            if (outs.empty()) continue;
            std::vector<NodeId> targets;
            for (NodeId callee : outs) {
                if (ctx.area->node_ids.count(callee) || state.node(callee).synthesized) {
                    targets.push_back(callee);
                }
            }
            if (targets.empty()) continue;
            o->caller = caller;
            o->callee = draw(targets);
            o->mid = draw(users);
        } else if (auto* o = std::get_if<RemoveNodeOp>(&candidate)) {
            o->target = draw(users);
        } else if (auto* o = std::get_if<AddSparseNodesOp>(&candidate)) {
            o->anchor = draw(users);
            NodeId next = state.peek_next_id();
            for (auto& id : o->new_ids) id = next++;
        } else if (auto* o = std::get_if<AddDenseNodesOp>(&candidate)) {
            o->anchor = draw(users);
            NodeId next = state.peek_next_id();
            for (auto& id : o->new_ids) id = next++;
        } else {
            auto& le = std::get<AddLongEdgesOp>(candidate);
            if (anchors.empty()) return std::nullopt;
            le.source = draw(users);
            le.target = draw(anchors);
            NodeId next = state.peek_next_id();
            for (auto& id : le.new_ids) id = next++;
        }
        if (!validate_op(state, candidate, actx)) return candidate;
    }
    return std::nullopt;
}

constexpr int kRepairPasses = 3;

} // namespace

std::optional<std::vector<PerturbationOp>> repair_sequence(const GenomeContext& ctx,
                                                           std::vector<PerturbationOp> ops,
                                                           Rng& rng, RepairStats* stats) {
    const ApplyContext actx = ctx.apply_ctx();
    for (int pass = 0; pass < kRepairPasses; ++pass) {
        FunctionCallGraph work = *ctx.base;
        std::size_t i = 0;
        while (i < ops.size()) {
            if (!apply_op(work, ops[i], actx)) {
                ++i;
                continue;
            }
            std::optional<PerturbationOp> fixed;
            if (ctx.dependency_aware) {
                fixed = try_retarget(ops[i], work, ctx, rng);
            }
            if (fixed && !apply_op(work, *fixed, actx)) {
                ops[i] = std::move(*fixed);
                if (stats) ++stats->retargeted;
                ++i;
            } else {
                ops.erase(ops.begin() + static_cast<std::ptrdiff_t>(i));
                if (stats) ++stats->deleted;
            }
        }
        if (std::holds_alternative<FunctionCallGraph>(apply_sequence(*ctx.base, ops, actx))) {
            return ops;
        }
    }
    return std::nullopt;
}

namespace {

NodeId max_defined_id(const Individual& ind) {
    NodeId max_id = 0;
    for (const SubSequence& sub : ind.sub_sequences) {
        for (NodeId id : sub.footprint.defines.nodes) {
            max_id = std::max(max_id, id);
        }
    }
    return max_id;
}

// Kept sub-sequences of one parent, then the other's, with synthetic ids
// renamed wherever they collide with ids the child already defines.
std::vector<PerturbationOp> assemble_child(const GenomeContext& ctx, const Individual& first,
                                           const std::vector<bool>& keep_first,
                                           const Individual& second,
                                           const std::vector<bool>& keep_second,
                                           NodeId& next_fresh) {
    std::vector<PerturbationOp> flat;
    std::set<NodeId> defined;
    for (std::size_t i = 0; i < first.sub_sequences.size(); ++i) {
        if (!keep_first[i]) continue;
        const SubSequence& sub = first.sub_sequences[i];
        flat.insert(flat.end(), sub.ops.begin(), sub.ops.end());
        defined.insert(sub.footprint.defines.nodes.begin(),
                       sub.footprint.defines.nodes.end());
    }
    for (std::size_t i = 0; i < second.sub_sequences.size(); ++i) {
        if (!keep_second[i]) continue;
        const SubSequence& sub = second.sub_sequences[i];
        std::map<NodeId, NodeId> rename;
        for (NodeId id : sub.footprint.defines.nodes) {
            if (defined.count(id)) rename.emplace(id, next_fresh++);
        }
        for (const PerturbationOp& op : sub.ops) {
            flat.push_back(rename.empty() ? op : remap_node_ids(op, rename));
        }
        for (NodeId id : sub.footprint.defines.nodes) {
            defined.insert(rename.count(id) ? rename.at(id) : id);
        }
    }
    (void)ctx;
    return flat;
}

std::vector<bool> keep_mask(std::size_t n, double p, Rng& rng) {
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.bernoulli(p);
    return mask;
}

} // namespace

CrossoverResult crossover(const GenomeContext& ctx, const Individual& x, const Individual& y,
                          Rng& rng) {
    NodeId next_fresh = std::max({ctx.base->peek_next_id(),
                                  static_cast<NodeId>(max_defined_id(x) + 1),
                                  static_cast<NodeId>(max_defined_id(y) + 1)});

    CrossoverResult result;
    RepairStats stats;

    const auto kx1 = keep_mask(x.sub_sequences.size(), ctx.keep_probability, rng);
    const auto ky1 = keep_mask(y.sub_sequences.size(), ctx.keep_probability, rng);
    auto flat1 = assemble_child(ctx, x, kx1, y, ky1, next_fresh);
    auto repaired1 = repair_sequence(ctx, std::move(flat1), rng, &stats);
    result.first = repaired1 ? group_dependencies(ctx, std::move(*repaired1)) : Individual{};

    const auto ky2 = keep_mask(y.sub_sequences.size(), ctx.keep_probability, rng);
    const auto kx2 = keep_mask(x.sub_sequences.size(), ctx.keep_probability, rng);
    auto flat2 = assemble_child(ctx, y, ky2, x, kx2, next_fresh);
    auto repaired2 = repair_sequence(ctx, std::move(flat2), rng, &stats);
    result.second = repaired2 ? group_dependencies(ctx, std::move(*repaired2)) : Individual{};

    result.repaired_ops = stats.retargeted + stats.deleted;
    return result;
}

MutationResult mutate(const GenomeContext& ctx, const Individual& ind, Rng& rng) {
    std::vector<PerturbationOp> flat = ind.flatten();

    enum { kAdd = 0, kRemove = 1, kUpdate = 2 };
    const int kind = flat.empty() ? kAdd : static_cast<int>(rng.uniform_index(3));

    std::size_t flat_pos = 0;
    if (!ind.empty()) {
        const std::size_t s = rng.uniform_index(ind.sub_sequences.size());
        std::size_t offset = 0;
        for (std::size_t i = 0; i < s; ++i) offset += ind.sub_sequences[i].ops.size();
        const std::size_t len = ind.sub_sequences[s].ops.size();
        const std::size_t pos =
            kind == kAdd ? rng.uniform_index(len + 1) : rng.uniform_index(len);
        flat_pos = offset + pos;
    }

    try {
        if (kind == kAdd || kind == kUpdate) {
            // The fresh operator must be valid against the state just
            // before its position in the flat sequence.
            const std::span<const PerturbationOp> prefix(flat.data(), flat_pos);
            auto replayed = apply_sequence(*ctx.base, prefix, ctx.apply_ctx());
            auto* state = std::get_if<FunctionCallGraph>(&replayed);
            if (state == nullptr) {
                return {ind, true};
            }
            PerturbationOp fresh = random_op(*state, *ctx.area, ctx.weights, ctx.ranges, rng);
            if (kind == kAdd) {
                flat.insert(flat.begin() + static_cast<std::ptrdiff_t>(flat_pos),
                            std::move(fresh));
            } else {
                flat[flat_pos] = std::move(fresh);
            }
        } else {
            flat.erase(flat.begin() + static_cast<std::ptrdiff_t>(flat_pos));
        }
    } catch (const NoValidOp&) {
        return {ind, true};
    }

    auto repaired = repair_sequence(ctx, std::move(flat), rng, nullptr);
    if (!repaired) {
        return {ind, true};
    }
    MutationResult out{group_dependencies(ctx, std::move(*repaired)), false};
    out.individual.generation = ind.generation;
    return out;
}

} // namespace fcg
