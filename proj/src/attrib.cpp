#include "fcg/attrib.hpp"

#include <numeric>

#include "fcg/errors.hpp"
#include "fcg/rng.hpp"

namespace fcg {

AttributionVector shapley_estimate(const ScoreFn& f, std::span<const double> baseline,
                                   std::span<const double> x, int n_samples,
                                   std::uint64_t seed) {
    if (baseline.size() != x.size()) {
        throw DimensionMismatch("baseline dim " + std::to_string(baseline.size()) +
                                " vs input dim " + std::to_string(x.size()));
    }
    if (n_samples < 1) {
        throw ConfigError("shapley n_samples must be >= 1");
    }

    const std::size_t dim = x.size();
    AttributionVector out;
    out.values.assign(dim, 0.0);
    out.baseline.assign(baseline.begin(), baseline.end());
    out.n_samples = n_samples;
    out.seed = seed;
    if (dim == 0) return out;

    Rng rng(seed);
    std::vector<std::size_t> perm(dim);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<double> z(baseline.begin(), baseline.end());

    for (int s = 0; s < n_samples; ++s) {
        rng.shuffle(perm);
        std::copy(baseline.begin(), baseline.end(), z.begin());
        double prev = f(z);
        for (std::size_t i : perm) {
            z[i] = x[i];
            const double cur = f(z);
            out.values[i] += cur - prev;
            prev = cur;
        }
    }
    const double inv = 1.0 / static_cast<double>(n_samples);
    for (auto& v : out.values) v *= inv;
    return out;
}

} // namespace fcg
