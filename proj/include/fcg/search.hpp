#ifndef FCG_SEARCH_HPP_
#define FCG_SEARCH_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fcg/attrib.hpp"
#include "fcg/embed.hpp"
#include "fcg/genome.hpp"
#include "fcg/graph.hpp"
#include "fcg/models.hpp"
#include "fcg/perturb.hpp"

namespace fcg {

struct FitnessScore {
    double f1 = 0.0;
    std::optional<double> f2; // absent in ensemble mode
    std::size_t op_count = 0; // tie-break for ensemble comparisons
    bool failed = false;      // evaluation error: ranks below everything
};

// Lexicographic dominance: higher f1 wins; at an f1 tie (1e-12) higher f2
// wins. Ensemble mode has no f2 and breaks exact f1 ties by fewer ops.
bool dominates(const FitnessScore& a, const FitnessScore& b);

// Everything the fitness functions need to know about the target.
struct AttackTarget {
    const Model* model = nullptr;
    Scheme scheme = Scheme::Degree;
    const SensitiveApiIndex* apis = nullptr;
    const AbstractionMap* abstraction = nullptr; // markov schemes only
    KatzParams katz;
};

struct ShapleySettings {
    int n_samples = 200;
    bool zero_baseline = false; // default: benign centroid from the model
    std::uint64_t seed = 7;
};

struct AttackConfig {
    std::size_t population_size = 100;
    int generations = 40;
    std::size_t initial_ops = 300;
    std::size_t elitism = 2;
    OpWeights weights;
    OpRanges ranges;
    double keep_probability = 0.5;
    bool dependency_aware = true;
    ShapleySettings shapley;
    std::uint64_t seed = 1;
    int threads = 1;
    // Random-baseline budget: fresh individuals of this size per iteration.
    int baseline_iterations = 100;
    std::size_t baseline_ops_per_iteration = 300;
};

struct GenerationLog {
    int generation = 0;
    double best_f1 = 0.0;
    double best_f2 = 0.0;
    bool has_f2 = false;
    std::size_t surviving_genes = 0; // N_g, total ops across the population
    bool attribution_refreshed = false;
    double wall_ms = 0.0; // excluded from deterministic metrics output
};

enum class AttackOutcome { Success, Exhausted };

struct AttackResult {
    AttackOutcome outcome = AttackOutcome::Exhausted;
    Individual best;
    FitnessScore best_fitness;
    std::string script;
    std::vector<GenerationLog> log;
    int generations_used = 0;
    std::string exhausted_reason;

    // Embedding delta summary for the best individual's graph.
    double delta_l1 = 0.0;
    double delta_l2 = 0.0;
    double delta_linf = 0.0;
    std::size_t changed_positions = 0;

    // Perturbation accounting against the original graph.
    std::size_t original_elements = 0; // |V| + |E|
    long long added_elements = 0;      // (|V'| + |E'|) - (|V| + |E|)

    // Budget accounting.
    std::uint64_t apply_op_invocations = 0;
    std::size_t max_individual_len = 0;
};

// Per-individual fitness; attribution may be null for ensemble targets.
FitnessScore fitness_mlp(const FeatureVector& perturbed, const FeatureVector& original,
                         const MlpModel& model, const AttributionVector& attribution,
                         std::size_t op_count);
FitnessScore fitness_knn(const FeatureVector& perturbed, const FeatureVector& original,
                         const KnnModel& model, const AttributionVector& attribution,
                         std::size_t op_count);
FitnessScore fitness_ensemble(const FeatureVector& perturbed,
                              const std::vector<Constraint>& constraints,
                              std::size_t op_count);

AttackResult run_attack(const AttackConfig& cfg, const AttackTarget& target,
                        const FunctionCallGraph& base, const CriticalArea& area);

AttackResult run_random_baseline(const AttackConfig& cfg, const AttackTarget& target,
                                 const FunctionCallGraph& base, const CriticalArea& area);

} // namespace fcg

#endif // FCG_SEARCH_HPP_
