#ifndef FCG_GENOME_HPP_
#define FCG_GENOME_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "fcg/graph.hpp"
#include "fcg/perturb.hpp"
#include "fcg/rng.hpp"

namespace fcg {

struct SubSequence {
    std::vector<PerturbationOp> ops;
    UseDefSet footprint; // union of the members' use-def sets

    void recompute_footprint();
    friend bool operator==(const SubSequence& a, const SubSequence& b) {
        return a.ops == b.ops;
    }
};

// GA genome: ordered dependency groups whose flattening replays cleanly
// on the base graph.
struct Individual {
    std::vector<SubSequence> sub_sequences;
    int generation = 0;

    std::vector<PerturbationOp> flatten() const;
    std::size_t op_count() const;
    bool empty() const { return sub_sequences.empty(); }

    friend bool operator==(const Individual& a, const Individual& b) {
        return a.sub_sequences == b.sub_sequences;
    }
};

// Shared inputs for everything that builds or repairs individuals.
struct GenomeContext {
    const FunctionCallGraph* base = nullptr;
    const CriticalArea* area = nullptr;
    OpWeights weights;
    OpRanges ranges;
    double keep_probability = 0.5; // per sub-sequence retention in crossover
    // When false, grouping degenerates to singleton sub-sequences and
    // repair deletes instead of retargeting (the -Dep ablation mode).
    bool dependency_aware = true;

    ApplyContext apply_ctx() const { return ApplyContext{&area->anchor_apis}; }
};

// Greedy grouping pass over a sequence that already replays cleanly,
// followed by a merge pass that restores cross-group independence when
// first-match grouping split a dependency chain.
Individual group_dependencies(const GenomeContext& ctx, std::vector<PerturbationOp> ops);

// Draws n_ops operators sequentially against the evolving working graph.
Individual init_individual(const GenomeContext& ctx, std::size_t n_ops, Rng& rng);

struct CrossoverResult {
    Individual first;
    Individual second;
    std::size_t repaired_ops = 0; // retargeted or deleted during re-validation
};

CrossoverResult crossover(const GenomeContext& ctx, const Individual& x, const Individual& y,
                          Rng& rng);

struct MutationResult {
    Individual individual;
    bool abandoned = false;
};

MutationResult mutate(const GenomeContext& ctx, const Individual& ind, Rng& rng);

struct RepairStats {
    std::size_t retargeted = 0;
    std::size_t deleted = 0;
};

// Replay ops on the base graph, retargeting or deleting ops that fail;
// returns the surviving sequence or nullopt when the pass budget is
// exhausted without a clean replay.
std::optional<std::vector<PerturbationOp>> repair_sequence(const GenomeContext& ctx,
                                                           std::vector<PerturbationOp> ops,
                                                           Rng& rng,
                                                           RepairStats* stats = nullptr);

// Replays the individual's flat sequence; true when it applies cleanly.
bool replays_cleanly(const GenomeContext& ctx, const Individual& ind);

} // namespace fcg

#endif // FCG_GENOME_HPP_
