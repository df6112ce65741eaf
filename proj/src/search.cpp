#include "fcg/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "fcg/errors.hpp"
#include "fcg/rng.hpp"

namespace fcg {

namespace {

constexpr double kTieTolerance = 1e-12;

} // namespace

bool dominates(const FitnessScore& a, const FitnessScore& b) {
    if (a.failed) return false;
    if (b.failed) return true;
    const bool f1_tied = std::abs(a.f1 - b.f1) <= kTieTolerance;
    if (a.f2.has_value() && b.f2.has_value()) {
        if (!f1_tied) return a.f1 > b.f1;
        return *a.f2 > *b.f2;
    }
    // Ensemble mode: f1 is a satisfied-constraint count.
    if (a.f1 != b.f1) return a.f1 > b.f1;
    return a.op_count < b.op_count;
}

FitnessScore fitness_mlp(const FeatureVector& perturbed, const FeatureVector& original,
                         const MlpModel& model, const AttributionVector& attribution,
                         std::size_t op_count) {
    FitnessScore fs;
    fs.op_count = op_count;
    fs.f1 = mlp_predict(model, perturbed.values);
    double f2 = 0.0;
    for (std::size_t i = 0; i < perturbed.values.size(); ++i) {
        f2 += attribution.values[i] * (perturbed.values[i] - original.values[i]);
    }
    fs.f2 = f2;
    return fs;
}

FitnessScore fitness_knn(const FeatureVector& perturbed, const FeatureVector& original,
                         const KnnModel& model, const AttributionVector& attribution,
                         std::size_t op_count) {
    FitnessScore fs;
    fs.op_count = op_count;
    const KnnDistances d = knn_distances(model, perturbed.values);
    if (d.malware.size() < model.k || d.benign.size() < model.k) {
        throw DegenerateData("knn fitness needs k rows per class");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < model.k; ++i) {
        sum += d.malware[i] - d.benign[i];
    }
    fs.f1 = sum / static_cast<double>(model.k);
    double f2 = 0.0;
    for (std::size_t i = 0; i < perturbed.values.size(); ++i) {
        f2 += attribution.values[i] * (perturbed.values[i] - original.values[i]);
    }
    fs.f2 = f2;
    return fs;
}

FitnessScore fitness_ensemble(const FeatureVector& perturbed,
                              const std::vector<Constraint>& constraints,
                              std::size_t op_count) {
    FitnessScore fs;
    fs.op_count = op_count;
    fs.f1 = static_cast<double>(sat_count(constraints, perturbed.values));
    return fs;
}

namespace {

struct Evaluation {
    FitnessScore fitness;
    FeatureVector embedding;
    bool benign = false;
};

class AttackRunner {
public:
    AttackRunner(const AttackConfig& cfg, const AttackTarget& target,
                 const FunctionCallGraph& base, const CriticalArea& area)
        : cfg_(cfg), target_(target), base_(base), area_(area) {
        if (cfg_.population_size < 2) {
            throw ConfigError("population_size must be >= 2");
        }
        if (target_.model == nullptr || target_.apis == nullptr) {
            throw ConfigError("attack target needs a model and an API index");
        }
        gctx_.base = &base_;
        gctx_.area = &area_;
        gctx_.weights = cfg_.weights;
        gctx_.ranges = cfg_.ranges;
        gctx_.keep_probability = cfg_.keep_probability;
        gctx_.dependency_aware = cfg_.dependency_aware;

        original_ = embed_graph(base_, target_.scheme, *target_.apis, target_.abstraction,
                                target_.katz);
        if (const auto* knn = std::get_if<KnnModel>(&target_.model->impl)) {
            if (!knn->surrogate.has_value()) {
                throw ConfigError("knn target requires a surrogate model for attribution");
            }
            std::size_t malware_rows = 0, benign_rows = 0;
            for (ClassLabel l : knn->labels) {
                (l == ClassLabel::Benign ? benign_rows : malware_rows) += 1;
            }
            if (malware_rows < knn->k || benign_rows < knn->k) {
                throw ConfigError("knn target needs at least k rows per class");
            }
        }
        if (const auto* ensemble = std::get_if<TreeEnsemble>(&target_.model->impl)) {
            constraints_ = extract_benign_constraints(*ensemble);
        }
    }

    AttackResult run(bool random_baseline) {
        const std::uint64_t ops_before = apply_op_invocations();
        AttackResult result;
        result.original_elements = base_.node_count() + base_.edge_count();

        if (area_.empty()) {
            result.outcome = AttackOutcome::Exhausted;
            result.exhausted_reason = "empty critical area: no sensitive API is reachable";
            result.apply_op_invocations = apply_op_invocations() - ops_before;
            return result;
        }
        if (std::holds_alternative<TreeEnsemble>(target_.model->impl) && constraints_.empty()) {
            result.outcome = AttackOutcome::Exhausted;
            result.exhausted_reason = "ensemble has no benign-path constraints";
            result.apply_op_invocations = apply_op_invocations() - ops_before;
            return result;
        }

        refresh_attribution(original_);

        // A seed the target already calls benign needs no perturbation.
        {
            Individual empty;
            Evaluation ev = evaluate(empty);
            if (ev.benign) {
                finish_success(result, empty, ev, 0);
                result.apply_op_invocations = apply_op_invocations() - ops_before;
                return result;
            }
        }

        Rng rng(cfg_.seed);
        const bool done = random_baseline ? run_baseline_loop(result, rng)
                                          : run_ga_loop(result, rng);
        (void)done;
        result.apply_op_invocations = apply_op_invocations() - ops_before;
        return result;
    }

private:
    bool run_ga_loop(AttackResult& result, Rng& rng) {
        std::vector<Individual> population;
        population.reserve(cfg_.population_size);
        try {
            for (std::size_t i = 0; i < cfg_.population_size; ++i) {
                population.push_back(init_individual(gctx_, cfg_.initial_ops, rng));
            }
        } catch (const NoValidOp& e) {
            result.outcome = AttackOutcome::Exhausted;
            result.exhausted_reason = std::string("population init failed: ") + e.what();
            return true;
        }

        std::vector<Evaluation> evals;
        std::vector<std::size_t> order;
        for (int gen = 0; gen < cfg_.generations; ++gen) {
            const auto t0 = std::chrono::steady_clock::now();
            evals = evaluate_population(population);
            order = rank(evals);

            GenerationLog log;
            log.generation = gen;
            const Evaluation& best = evals[order.front()];
            log.best_f1 = best.fitness.f1;
            log.has_f2 = best.fitness.f2.has_value();
            log.best_f2 = best.fitness.f2.value_or(0.0);
            log.attribution_refreshed = attribution_refreshed_;
            std::size_t genes = 0;
            for (const Individual& ind : population) genes += ind.op_count();
            log.surviving_genes = genes;
            log.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            result.log.push_back(log);
            for (const Individual& ind : population) {
                result.max_individual_len = std::max(result.max_individual_len, ind.op_count());
            }

            if (best.benign) {
                finish_success(result, population[order.front()], best, gen);
                return true;
            }
            if (gen + 1 == cfg_.generations) break;

            // Survivors by dominance-sorted truncation, refill by
            // tournament-selected crossover + mutation.
            std::vector<Individual> next;
            next.reserve(cfg_.population_size);
            for (std::size_t e = 0; e < std::min(cfg_.elitism, population.size()); ++e) {
                next.push_back(population[order[e]]);
            }
            while (next.size() < cfg_.population_size) {
                const Individual& p1 = population[tournament(evals, rng)];
                const Individual& p2 = population[tournament(evals, rng)];
                CrossoverResult children = crossover(gctx_, p1, p2, rng);
                MutationResult m1 = mutate(gctx_, children.first, rng);
                m1.individual.generation = gen + 1;
                next.push_back(std::move(m1.individual));
                if (next.size() < cfg_.population_size) {
                    MutationResult m2 = mutate(gctx_, children.second, rng);
                    m2.individual.generation = gen + 1;
                    next.push_back(std::move(m2.individual));
                }
            }
            population = std::move(next);

            refresh_attribution(evals[order.front()].embedding);
        }

        result.outcome = AttackOutcome::Exhausted;
        result.exhausted_reason = "generation budget exhausted";
        result.best = population[order.front()];
        result.best_fitness = evals[order.front()].fitness;
        result.generations_used = static_cast<int>(result.log.size());
        fill_delta_summary(result, evals[order.front()]);
        return true;
    }

    bool run_baseline_loop(AttackResult& result, Rng& rng) {
        Evaluation best_eval;
        Individual best_ind;
        bool have_best = false;

        for (int iter = 0; iter < cfg_.baseline_iterations; ++iter) {
            const auto t0 = std::chrono::steady_clock::now();
            Individual ind;
            try {
                ind = init_individual(gctx_, cfg_.baseline_ops_per_iteration, rng);
            } catch (const NoValidOp& e) {
                result.outcome = AttackOutcome::Exhausted;
                result.exhausted_reason = std::string("baseline generation failed: ") + e.what();
                return true;
            }
            Evaluation ev = evaluate(ind);

            GenerationLog log;
            log.generation = iter;
            log.best_f1 = ev.fitness.f1;
            log.has_f2 = ev.fitness.f2.has_value();
            log.best_f2 = ev.fitness.f2.value_or(0.0);
            log.surviving_genes = ind.op_count();
            log.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            result.log.push_back(log);
            result.max_individual_len = std::max(result.max_individual_len, ind.op_count());

            if (!have_best || dominates(ev.fitness, best_eval.fitness)) {
                best_eval = ev;
                best_ind = ind;
                have_best = true;
            }
            if (ev.benign) {
                finish_success(result, ind, ev, iter);
                return true;
            }
        }
        result.outcome = AttackOutcome::Exhausted;
        result.exhausted_reason = "iteration budget exhausted";
        if (have_best) {
            result.best = best_ind;
            result.best_fitness = best_eval.fitness;
            fill_delta_summary(result, best_eval);
        }
        result.generations_used = static_cast<int>(result.log.size());
        return true;
    }

    Evaluation evaluate(const Individual& ind) const {
        Evaluation ev;
        ev.fitness.op_count = ind.op_count();
        try {
            const auto flat = ind.flatten();
            auto replayed = apply_sequence(base_, flat, gctx_.apply_ctx());
            auto* graph = std::get_if<FunctionCallGraph>(&replayed);
            if (graph == nullptr) {
                ev.fitness.failed = true;
                return ev;
            }
            ev.embedding = embed_graph(*graph, target_.scheme, *target_.apis,
                                       target_.abstraction, target_.katz);
            if (const auto* mlp = std::get_if<MlpModel>(&target_.model->impl)) {
                ev.fitness = fitness_mlp(ev.embedding, original_, *mlp, attribution_,
                                         ind.op_count());
                ev.benign = ev.fitness.f1 >= 0.5;
            } else if (const auto* knn = std::get_if<KnnModel>(&target_.model->impl)) {
                ev.fitness = fitness_knn(ev.embedding, original_, *knn, attribution_,
                                         ind.op_count());
                ev.benign = knn_predict(*knn, ev.embedding.values) == ClassLabel::Benign;
            } else {
                const auto& ensemble = std::get<TreeEnsemble>(target_.model->impl);
                ev.fitness = fitness_ensemble(ev.embedding, constraints_, ind.op_count());
                ev.benign = ensemble_predict(ensemble, ev.embedding.values) ==
                            ClassLabel::Benign;
            }
        } catch (const Error&) {
            // Evaluation errors demote the individual instead of aborting.
            ev.fitness.failed = true;
            ev.benign = false;
        }
        return ev;
    }

    std::vector<Evaluation> evaluate_population(const std::vector<Individual>& population) const {
        std::vector<Evaluation> evals(population.size());
        const int threads = std::max(1, cfg_.threads);
        if (threads == 1 || population.size() < 2) {
            for (std::size_t i = 0; i < population.size(); ++i) {
                evals[i] = evaluate(population[i]);
            }
            return evals;
        }
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t]() {
                for (std::size_t i = static_cast<std::size_t>(t); i < population.size();
                     i += static_cast<std::size_t>(threads)) {
                    evals[i] = evaluate(population[i]);
                }
            });
        }
        for (auto& th : pool) th.join();
        return evals;
    }

    // Total order consistent with dominance: failures last, then f1 desc,
    // f2 desc, fewer ops, insertion index.
    std::vector<std::size_t> rank(const std::vector<Evaluation>& evals) const {
        std::vector<std::size_t> order(evals.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const FitnessScore& fa = evals[a].fitness;
            const FitnessScore& fb = evals[b].fitness;
            if (fa.failed != fb.failed) return !fa.failed;
            if (fa.f1 != fb.f1) return fa.f1 > fb.f1;
            const double a2 = fa.f2.value_or(0.0), b2 = fb.f2.value_or(0.0);
            if (a2 != b2) return a2 > b2;
            return fa.op_count < fb.op_count;
        });
        return order;
    }

    std::size_t tournament(const std::vector<Evaluation>& evals, Rng& rng) const {
        const std::size_t a = rng.uniform_index(evals.size());
        const std::size_t b = rng.uniform_index(evals.size());
        if (dominates(evals[b].fitness, evals[a].fitness)) return b;
        return a; // ties go to the first draw
    }

    void refresh_attribution(const FeatureVector& reference) {
        if (std::holds_alternative<TreeEnsemble>(target_.model->impl)) {
            attribution_refreshed_ = false;
            return;
        }
        if (!reference_.values.empty() && reference.values == reference_.values) {
            attribution_refreshed_ = false;
            return;
        }
        reference_ = reference;

        const MlpModel* net = nullptr;
        if (const auto* mlp = std::get_if<MlpModel>(&target_.model->impl)) {
            net = mlp;
        } else {
            net = &*std::get<KnnModel>(target_.model->impl).surrogate;
        }
        std::vector<double> baseline(reference.values.size(), 0.0);
        if (!cfg_.shapley.zero_baseline && net->benign_centroid.size() == baseline.size()) {
            baseline = net->benign_centroid;
        }
        const ScoreFn score = [net](std::span<const double> x) { return mlp_predict(*net, x); };
        attribution_ = shapley_estimate(score, baseline, reference.values,
                                        cfg_.shapley.n_samples, cfg_.shapley.seed);
        attribution_refreshed_ = true;
    }

    void finish_success(AttackResult& result, const Individual& ind, const Evaluation& ev,
                        int generation) {
        (void)generation;
        // Success self-verification: independent replay + predict.
        const auto flat = ind.flatten();
        auto replayed = apply_sequence(base_, flat, gctx_.apply_ctx());
        auto* graph = std::get_if<FunctionCallGraph>(&replayed);
        if (graph == nullptr) {
            throw InvalidSequence("success self-check failed: individual does not replay");
        }
        const FeatureVector emb = embed_graph(*graph, target_.scheme, *target_.apis,
                                              target_.abstraction, target_.katz);
        if (!verdict_is_benign(*target_.model, emb.values)) {
            throw InvalidSequence("success self-check failed: verdict is not benign");
        }

        result.outcome = AttackOutcome::Success;
        result.best = ind;
        result.best_fitness = ev.fitness;
        result.script = translate_to_script(flat);
        result.generations_used = static_cast<int>(result.log.size());
        const long long perturbed_elements =
            static_cast<long long>(graph->node_count() + graph->edge_count());
        result.added_elements =
            perturbed_elements - static_cast<long long>(result.original_elements);
        fill_delta_summary(result, ev);
    }

    void fill_delta_summary(AttackResult& result, const Evaluation& ev) const {
        if (ev.embedding.values.empty()) return;
        double l1 = 0.0, l2 = 0.0, linf = 0.0;
        std::size_t changed = 0;
        for (std::size_t i = 0; i < ev.embedding.values.size(); ++i) {
            const double d = ev.embedding.values[i] - original_.values[i];
            l1 += std::abs(d);
            l2 += d * d;
            linf = std::max(linf, std::abs(d));
            if (d != 0.0) ++changed;
        }
        result.delta_l1 = l1;
        result.delta_l2 = std::sqrt(l2);
        result.delta_linf = linf;
        result.changed_positions = changed;
    }

    const AttackConfig& cfg_;
    const AttackTarget& target_;
    const FunctionCallGraph& base_;
    const CriticalArea& area_;
    GenomeContext gctx_;
    FeatureVector original_;
    FeatureVector reference_;
    std::vector<Constraint> constraints_;
    AttributionVector attribution_;
    bool attribution_refreshed_ = false;
};

} // namespace

AttackResult run_attack(const AttackConfig& cfg, const AttackTarget& target,
                        const FunctionCallGraph& base, const CriticalArea& area) {
    AttackRunner runner(cfg, target, base, area);
    return runner.run(false);
}

AttackResult run_random_baseline(const AttackConfig& cfg, const AttackTarget& target,
                                 const FunctionCallGraph& base, const CriticalArea& area) {
    AttackRunner runner(cfg, target, base, area);
    return runner.run(true);
}

} // namespace fcg
