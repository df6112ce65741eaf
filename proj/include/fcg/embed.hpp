#ifndef FCG_EMBED_HPP_
#define FCG_EMBED_HPP_

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "fcg/graph.hpp"

namespace fcg {

enum class Scheme {
    Degree,
    Katz,
    Harmonic,
    Closeness,
    Average,
    Concentrate,
    MamaFamily,
    ApiGraphCluster,
};

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct FeatureVector {
    Scheme scheme = Scheme::Degree;
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

// Maps function labels to abstract states by longest prefix match.
// Labels matching no prefix fall back to the self-defined state, whose
// id is one past the largest id in the map file.
class AbstractionMap {
public:
    AbstractionMap() = default;
    AbstractionMap(std::vector<std::pair<std::string, int>> entries);

    static AbstractionMap load(std::istream& in);
    static AbstractionMap load_file(const std::string& path);

    int state_of(const std::string& label) const;
    int self_state() const { return self_state_; }
    int state_count() const { return state_count_; }

private:
    std::vector<std::pair<std::string, int>> entries_; // sorted by prefix length desc
    int self_state_ = 0;
    int state_count_ = 1;
};

struct KatzParams {
    double alpha = 0.005;
    double tol = 1e-9;
    int max_iter = 1000;
};

FeatureVector degree_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis);
FeatureVector katz_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis,
                              double alpha, double tol = 1e-9, int max_iter = 1000);
FeatureVector harmonic_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis);
FeatureVector closeness_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis);
FeatureVector average_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis,
                                 double alpha, double tol = 1e-9, int max_iter = 1000);
FeatureVector concentrate_centrality(const FunctionCallGraph& g, const SensitiveApiIndex& apis,
                                     double alpha, double tol = 1e-9, int max_iter = 1000);
FeatureVector markov_embedding(const FunctionCallGraph& g, const AbstractionMap& abstraction,
                               Scheme scheme = Scheme::MamaFamily);

// Dispatcher used by trainers and the attack loop. Markov schemes need
// an abstraction map; centrality schemes need the API index.
FeatureVector embed_graph(const FunctionCallGraph& g, Scheme scheme,
                          const SensitiveApiIndex& apis,
                          const AbstractionMap* abstraction = nullptr,
                          const KatzParams& katz = {});

std::size_t embedding_dim(Scheme scheme, const SensitiveApiIndex& apis,
                          const AbstractionMap* abstraction = nullptr);

} // namespace fcg

#endif // FCG_EMBED_HPP_
