#ifndef FCG_ATTRIB_HPP_
#define FCG_ATTRIB_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fcg {

using ScoreFn = std::function<double(std::span<const double>)>;

struct AttributionVector {
    std::vector<double> values;
    std::vector<double> baseline;
    int n_samples = 0;
    std::uint64_t seed = 0;
};

// Permutation-sampling Shapley estimate of f's attribution at x relative
// to the baseline. Per sampled permutation the marginal contributions
// telescope, so sum(values) == f(x) - f(baseline) holds exactly.
AttributionVector shapley_estimate(const ScoreFn& f, std::span<const double> baseline,
                                   std::span<const double> x, int n_samples,
                                   std::uint64_t seed);

} // namespace fcg

#endif // FCG_ATTRIB_HPP_
