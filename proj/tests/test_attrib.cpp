#include <doctest.h>

#include <cmath>
#include <vector>

#include "fcg/attrib.hpp"
#include "fcg/errors.hpp"
#include "fcg/models.hpp"
#include "fcg/rng.hpp"

using namespace fcg;

namespace {

MlpModel random_mlp(Rng& rng, std::size_t in_dim, std::size_t hidden) {
    MlpModel m;
    m.input_dim = in_dim;
    MlpLayer h;
    h.in_dim = in_dim;
    h.out_dim = hidden;
    h.activation = Activation::ReLU;
    h.weights.resize(in_dim * hidden);
    h.bias.resize(hidden);
    for (auto& w : h.weights) w = rng.uniform(-1.0, 1.0);
    for (auto& b : h.bias) b = rng.uniform(-0.5, 0.5);
    m.layers.push_back(std::move(h));
    MlpLayer out;
    out.in_dim = hidden;
    out.out_dim = 1;
    out.activation = Activation::Sigmoid;
    out.weights.resize(hidden);
    out.bias.resize(1);
    for (auto& w : out.weights) w = rng.uniform(-1.0, 1.0);
    out.bias[0] = rng.uniform(-0.5, 0.5);
    m.layers.push_back(std::move(out));
    return m;
}

// Exact Shapley values by full subset enumeration (dim <= 20).
std::vector<double> exact_shapley(const ScoreFn& f, const std::vector<double>& baseline,
                                  const std::vector<double>& x) {
    const std::size_t d = x.size();
    std::vector<double> fact(d + 1, 1.0);
    for (std::size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);

    std::vector<double> value(static_cast<std::size_t>(1) << d);
    std::vector<double> z(d);
    for (std::size_t mask = 0; mask < value.size(); ++mask) {
        for (std::size_t i = 0; i < d; ++i) {
            z[i] = (mask >> i) & 1 ? x[i] : baseline[i];
        }
        value[mask] = f(z);
    }

    std::vector<double> phi(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t mask = 0; mask < value.size(); ++mask) {
            if ((mask >> i) & 1) continue;
            const auto s = static_cast<std::size_t>(__builtin_popcountll(mask));
            const double weight = fact[s] * fact[d - s - 1] / fact[d];
            phi[i] += weight * (value[mask | (1ull << i)] - value[mask]);
        }
    }
    return phi;
}

} // namespace

TEST_CASE("linear functions attribute w_i * x_i exactly") {
    const std::vector<double> w{0.5, -1.0, 2.0};
    const ScoreFn f = [&](std::span<const double> z) {
        return 0.5 * z[0] - 1.0 * z[1] + 2.0 * z[2];
    };
    const std::vector<double> baseline{0.0, 0.0, 0.0};
    const std::vector<double> x{1.0, 2.0, -0.5};
    for (int n_samples : {1, 3, 17}) {
        const AttributionVector phi = shapley_estimate(f, baseline, x, n_samples, 42);
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(phi.values[i] == doctest::Approx(w[i] * x[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("x equal to baseline yields zero attribution") {
    const ScoreFn f = [](std::span<const double> z) { return z[0] * z[1]; };
    const std::vector<double> b{0.7, -0.3};
    const AttributionVector phi = shapley_estimate(f, b, b, 50, 7);
    for (double v : phi.values) CHECK(v == 0.0);
}

TEST_CASE("dimension mismatch and sample count are validated") {
    const ScoreFn f = [](std::span<const double> z) { return z[0]; };
    CHECK_THROWS_AS(
        shapley_estimate(f, std::vector<double>{0.0}, std::vector<double>{0.0, 1.0}, 10, 1),
        DimensionMismatch);
    CHECK_THROWS_AS(
        shapley_estimate(f, std::vector<double>{0.0}, std::vector<double>{1.0}, 0, 1),
        ConfigError);
}

TEST_CASE("efficiency identity holds on every call") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dim = 2 + rng.uniform_index(7);
        const MlpModel net = random_mlp(rng, dim, 6);
        const ScoreFn f = [&](std::span<const double> z) { return mlp_predict(net, z); };
        std::vector<double> baseline(dim), x(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            baseline[i] = rng.uniform(-0.5, 0.5);
            x[i] = rng.uniform(-1.0, 1.0);
        }
        const AttributionVector phi = shapley_estimate(f, baseline, x, 37, 1000 + trial);
        double total = 0.0;
        for (double v : phi.values) total += v;
        const double expected = mlp_predict(net, x) - mlp_predict(net, baseline);
        CHECK(total == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("sampling estimate approaches exact subset-enumeration Shapley") {
    Rng rng(123);
    double worst_rel = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t dim = 4 + rng.uniform_index(5); // 4..8
        const MlpModel net = random_mlp(rng, dim, 8);
        const ScoreFn f = [&](std::span<const double> z) { return mlp_predict(net, z); };
        std::vector<double> baseline(dim, 0.0), x(dim);
        for (auto& v : x) v = rng.uniform(-1.5, 1.5);

        const std::vector<double> exact = exact_shapley(f, baseline, x);
        const AttributionVector est = shapley_estimate(f, baseline, x, 2000, 555 + trial);

        double max_abs = 0.0;
        for (double v : exact) max_abs = std::max(max_abs, std::abs(v));
        double mae = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            mae += std::abs(est.values[i] - exact[i]);
        }
        mae /= static_cast<double>(dim);
        if (max_abs > 0.0) worst_rel = std::max(worst_rel, mae / max_abs);
    }
    CHECK(worst_rel < 0.05);
}

TEST_CASE("symmetric features receive converging attributions") {
    const ScoreFn f = [](std::span<const double> z) {
        const double s = z[0] + z[1];
        return s * s + 0.3 * z[2];
    };
    const std::vector<double> baseline{0.0, 0.0, 0.0};
    const std::vector<double> x{1.0, 1.0, 1.0};
    double prev_gap = 1e9;
    for (int n : {50, 500, 5000}) {
        const AttributionVector phi = shapley_estimate(f, baseline, x, n, 31);
        const double gap = std::abs(phi.values[0] - phi.values[1]);
        CHECK(gap <= prev_gap + 1e-9);
        prev_gap = gap;
    }
    CHECK(prev_gap < 0.05);
}

TEST_CASE("identical seeds and inputs give identical attributions") {
    Rng rng(7);
    const MlpModel net = random_mlp(rng, 5, 4);
    const ScoreFn f = [&](std::span<const double> z) { return mlp_predict(net, z); };
    const std::vector<double> baseline(5, 0.0);
    std::vector<double> x{0.1, -0.2, 0.3, -0.4, 0.5};
    const AttributionVector a = shapley_estimate(f, baseline, x, 64, 2024);
    const AttributionVector b = shapley_estimate(f, baseline, x, 64, 2024);
    CHECK(a.values == b.values);
}
