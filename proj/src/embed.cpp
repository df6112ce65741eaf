#include "fcg/embed.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "fcg/errors.hpp"

namespace fcg {

const char* scheme_name(Scheme s) {
    switch (s) {
    case Scheme::Degree: return "degree";
    case Scheme::Katz: return "katz";
    case Scheme::Harmonic: return "harmonic";
    case Scheme::Closeness: return "closeness";
    case Scheme::Average: return "average";
    case Scheme::Concentrate: return "concentrate";
    case Scheme::MamaFamily: return "mama_family";
    case Scheme::ApiGraphCluster: return "apigraph_cluster";
    }
    return "unknown";
}

Scheme scheme_from_name(const std::string& name) {
    for (Scheme s : {Scheme::Degree, Scheme::Katz, Scheme::Harmonic, Scheme::Closeness,
                     Scheme::Average, Scheme::Concentrate, Scheme::MamaFamily,
                     Scheme::ApiGraphCluster}) {
        if (name == scheme_name(s)) return s;
    }
    throw ConfigError("unknown embedding scheme \"" + name + "\"");
}

AbstractionMap::AbstractionMap(std::vector<std::pair<std::string, int>> entries)
    : entries_(std::move(entries)) {
    int max_id = -1;
    for (const auto& [prefix, id] : entries_) {
        if (prefix.empty()) throw ParseError("empty prefix in abstraction map");
        if (id < 0) throw ParseError("negative state id in abstraction map");
        max_id = std::max(max_id, id);
    }
    // Longest prefix first so state_of can take the first hit.
    std::stable_sort(entries_.begin(), entries_.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    self_state_ = max_id + 1;
    state_count_ = max_id + 2;
}

AbstractionMap AbstractionMap::load(std::istream& in) {
    std::vector<std::pair<std::string, int>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("abstraction map line " + std::to_string(lineno) +
                             ": expected \"prefix<TAB>state_id\"");
        }
        try {
            entries.emplace_back(line.substr(0, tab), std::stoi(line.substr(tab + 1)));
        } catch (const std::exception&) {
            throw ParseError("abstraction map line " + std::to_string(lineno) +
                             ": bad state id");
        }
    }
    return AbstractionMap(std::move(entries));
}

AbstractionMap AbstractionMap::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return load(in);
}

int AbstractionMap::state_of(const std::string& label) const {
    for (const auto& [prefix, id] : entries_) {
        if (label.size() >= prefix.size() && label.compare(0, prefix.size(), prefix) == 0) {
            return id;
        }
    }
    return self_state_;
}

namespace {

// Lowest node id per sensitive label present in the graph.
std::vector<std::optional<NodeId>> sensitive_nodes(const FunctionCallGraph& g,
                                                   const SensitiveApiIndex& apis) {
    std::vector<std::optional<NodeId>> slots(apis.size());
    for (const auto& [id, rec] : g.nodes()) {
        if (rec.kind != NodeKind::System) continue;
        if (auto pos = apis.position_of(rec.label); pos && !slots[*pos]) {
            slots[*pos] = id;
        }
    }
    return slots;
}

// Distances d(u, v) for all u, via BFS over reversed edges from v.
std::unordered_map<NodeId, std::size_t> inbound_distances(const FunctionCallGraph& g, NodeId v) {
    std::unordered_map<NodeId, std::size_t> dist;
    dist.emplace(v, 0);
    std::deque<NodeId> frontier{v};
    while (!frontier.empty()) {
        const NodeId cur = frontier.front();
        frontier.pop_front();
        const std::size_t d = dist.at(cur);
        for (NodeId caller : g.in_edges(cur)) {
            if (dist.emplace(caller, d + 1).second) {
                frontier.push_back(caller);
            }
        }
    }
    return dist;
}

void require_at_least_two_nodes(const FunctionCallGraph& g, const char* what) {
    if (g.node_count() < 2) {
        throw DegenerateGraph(std::string(what) + " needs at least 2 nodes, got " +
                              std::to_string(g.node_count()));
    }
}

// Spectral radius estimate by power iteration; 0 for nilpotent graphs.
double estimate_lambda_max(const FunctionCallGraph& g) {
    const std::size_t n = g.node_count();
    if (n == 0 || g.edge_count() == 0) return 0.0;

    std::unordered_map<NodeId, double> x;
    x.reserve(n);
    for (const auto& [id, rec] : g.nodes()) {
        (void)rec;
        x[id] = 1.0;
    }
    double lambda = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
        std::unordered_map<NodeId, double> y;
        y.reserve(n);
        for (const auto& [id, rec] : g.nodes()) {
            (void)rec;
            y[id] = 0.0;
        }
        for (const auto& [caller, callees] : g.nodes()) {
            (void)callees;
            const double xv = x.at(caller);
            if (xv == 0.0) continue;
            for (NodeId callee : g.out_edges(caller)) {
                y[callee] += xv;
            }
        }
        double norm = 0.0;
        for (const auto& [id, val] : y) {
            (void)id;
            norm += val * val;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0; // nilpotent: every walk dies out
        lambda = norm;
        for (auto& [id, val] : y) {
            (void)id;
            val /= norm;
        }
        x = std::move(y);
    }
    return lambda;
}

} // namespace

FeatureVector degree_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis) {
    require_at_least_two_nodes(g, "degree centrality");
    const double denom = static_cast<double>(g.node_count() - 1);
    FeatureVector fv{Scheme::Degree, std::vector<double>(apis.size(), 0.0)};
    const auto slots = sensitive_nodes(g, apis);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            fv.values[i] = static_cast<double>(g.degree(*slots[i])) / denom;
        }
    }
    return fv;
}

FeatureVector katz_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis,
                              double alpha, double tol, int max_iter) {
    const double lambda = estimate_lambda_max(g);
    if (alpha <= 0.0 || (lambda > 0.0 && alpha * lambda >= 0.9)) {
        throw AlphaTooLarge("alpha " + std::to_string(alpha) +
                            " outside (0, 0.9/lambda_max), lambda_max ~ " +
                            std::to_string(lambda));
    }

    // Fixed point of x = alpha * A^T (x + 1), i.e. the column-sum form of
    // the attenuated walk count into each node.
    std::unordered_map<NodeId, double> x;
    x.reserve(g.node_count());
    for (const auto& [id, rec] : g.nodes()) {
        (void)rec;
        x[id] = 0.0;
    }
    bool converged = g.edge_count() == 0;
    for (int iter = 0; iter < max_iter && !converged; ++iter) {
        std::unordered_map<NodeId, double> next;
        next.reserve(g.node_count());
        for (const auto& [id, rec] : g.nodes()) {
            (void)rec;
            next[id] = 0.0;
        }
        for (const auto& [caller, rec] : g.nodes()) {
            (void)rec;
            const double contrib = alpha * (x.at(caller) + 1.0);
            for (NodeId callee : g.out_edges(caller)) {
                next[callee] += contrib;
            }
        }
        double delta = 0.0;
        for (const auto& [id, val] : next) {
            delta = std::max(delta, std::abs(val - x.at(id)));
        }
        x = std::move(next);
        converged = delta < tol;
    }
    if (!converged) {
        throw NonConvergent("katz iteration did not reach tol " + std::to_string(tol) +
                            " within " + std::to_string(max_iter) + " iterations");
    }

    FeatureVector fv{Scheme::Katz, std::vector<double>(apis.size(), 0.0)};
    const auto slots = sensitive_nodes(g, apis);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) fv.values[i] = x.at(*slots[i]);
    }
    return fv;
}

FeatureVector harmonic_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis) {
    FeatureVector fv{Scheme::Harmonic, std::vector<double>(apis.size(), 0.0)};
    const auto slots = sensitive_nodes(g, apis);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) continue;
        double sum = 0.0;
        for (const auto& [u, d] : inbound_distances(g, *slots[i])) {
            (void)u;
            if (d > 0) sum += 1.0 / static_cast<double>(d);
        }
        fv.values[i] = sum;
    }
    return fv;
}

FeatureVector closeness_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis) {
    require_at_least_two_nodes(g, "closeness centrality");
    const double n_minus_1 = static_cast<double>(g.node_count() - 1);
    FeatureVector fv{Scheme::Closeness, std::vector<double>(apis.size(), 0.0)};
    const auto slots = sensitive_nodes(g, apis);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) continue;
        const auto dist = inbound_distances(g, *slots[i]);
        double sum = 0.0;
        for (const auto& [u, d] : dist) {
            (void)u;
            sum += static_cast<double>(d);
        }
        if (sum > 0.0) {
            const double reachable = static_cast<double>(dist.size()); // includes v itself
            fv.values[i] = (reachable - 1.0) * (reachable - 1.0) / (sum * n_minus_1);
        }
    }
    return fv;
}

FeatureVector average_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis,
                                 double alpha, double tol, int max_iter) {
    const auto d = degree_centrality(g, apis);
    const auto k = katz_centrality(g, apis, alpha, tol, max_iter);
    const auto h = harmonic_centrality(g, apis);
    const auto c = closeness_centrality(g, apis);
    FeatureVector fv{Scheme::Average, std::vector<double>(apis.size(), 0.0)};
    for (std::size_t i = 0; i < apis.size(); ++i) {
        fv.values[i] = (d.values[i] + k.values[i] + h.values[i] + c.values[i]) / 4.0;
    }
    return fv;
}

FeatureVector concentrate_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis,
                                     double alpha, double tol, int max_iter) {
    const auto d = degree_centrality(g, apis);
    const auto k = katz_centrality(g, apis, alpha, tol, max_iter);
    const auto h = harmonic_centrality(g, apis);
    const auto c = closeness_centrality(g, apis);
    FeatureVector fv{Scheme::Concentrate, {}};
    fv.values.reserve(4 * apis.size());
    for (const auto* part : {&d, &k, &h, &c}) {
        fv.values.insert(fv.values.end(), part->values.begin(), part->values.end());
    }
    return fv;
}

FeatureVector markov_embedding(const FunctionCallGraph& g, const AbstractionMap& abstraction,
                               Scheme scheme) {
    const std::size_t s = static_cast<std::size_t>(abstraction.state_count());
    std::vector<double> counts(s * s, 0.0);

    std::unordered_map<NodeId, int> state_of_node;
    state_of_node.reserve(g.node_count());
    auto state_of = [&](NodeId id) {
        auto it = state_of_node.find(id);
        if (it != state_of_node.end()) return it->second;
        const int st = abstraction.state_of(g.node(id).label);
        state_of_node.emplace(id, st);
        return st;
    };

    for (const auto& [caller, rec] : g.nodes()) {
        (void)rec;
        const int j = state_of(caller);
        for (NodeId callee : g.out_edges(caller)) {
            counts[static_cast<std::size_t>(j) * s + static_cast<std::size_t>(state_of(callee))] += 1.0;
        }
    }

    FeatureVector fv{scheme, std::move(counts)};
    for (std::size_t j = 0; j < s; ++j) {
        double row_sum = 0.0;
        for (std::size_t k = 0; k < s; ++k) row_sum += fv.values[j * s + k];
        if (row_sum > 0.0) {
            for (std::size_t k = 0; k < s; ++k) fv.values[j * s + k] /= row_sum;
        }
    }
    return fv;
}

FeatureVector embed_graph(const FunctionCallGraph& g, Scheme scheme,
                          const SensitiveApiIndex& apis, const AbstractionMap* abstraction,
                          const KatzParams& katz) {
    switch (scheme) {
    case Scheme::Degree: return degree_centrality(g, apis);
    case Scheme::Katz: return katz_centrality(g, apis, katz.alpha, katz.tol, katz.max_iter);
    case Scheme::Harmonic: return harmonic_centrality(g, apis);
    case Scheme::Closeness: return closeness_centrality(g, apis);
    case Scheme::Average:
        return average_centrality(g, apis, katz.alpha, katz.tol, katz.max_iter);
    case Scheme::Concentrate:
        return concentrate_centrality(g, apis, katz.alpha, katz.tol, katz.max_iter);
    case Scheme::MamaFamily:
    case Scheme::ApiGraphCluster:
        if (abstraction == nullptr) {
            throw ConfigError("markov scheme requires an abstraction map");
        }
        return markov_embedding(g, *abstraction, scheme);
    }
    throw ConfigError("unknown embedding scheme");
}

std::size_t embedding_dim(Scheme scheme, const SensitiveApiIndex& apis,
                          const AbstractionMap* abstraction) {
    switch (scheme) {
    case Scheme::Degree:
    case Scheme::Katz:
    case Scheme::Harmonic:
    case Scheme::Closeness:
    case Scheme::Average:
        return apis.size();
    case Scheme::Concentrate:
        return 4 * apis.size();
    case Scheme::MamaFamily:
    case Scheme::ApiGraphCluster:
        if (abstraction == nullptr) {
            throw ConfigError("markov scheme requires an abstraction map");
        }
        return static_cast<std::size_t>(abstraction->state_count()) *
               static_cast<std::size_t>(abstraction->state_count());
    }
    throw ConfigError("unknown embedding scheme");
}

} // namespace fcg
