#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "qhjb/diagnostics.hpp"

using namespace qhjb;

namespace {

// s_k(x) = gamma^(1-x) (2 + sqrt(2) z_k) for the right-moving action.
StatisticsTable right_branch_table(const Lattice& lat, std::size_t n, double gamma) {
    StatisticsTable table(lat.num_cells(), 2, n);
    for (Cell c = 0; c < lat.num_cells(); ++c) {
        const double x = lat.point(c)[0];
        table.set(c, 1, QuantileDistribution::gaussian(n, 2.0, std::sqrt(2.0)).pushforward_affine(1.0 - x, 0.0, gamma));
    }
    return table;
}

double max_right_residual(double eps) {
    const double gamma = 0.3;
    Lattice lat(eps);
    const auto table = right_branch_table(lat, 51, gamma);
    double worst = 0.0;
    for (Cell c = 1; c + 1 < lat.num_cells(); ++c) {
        if (lat.point(c)[0] - eps <= analytic_kink(gamma)) continue;
        for (std::size_t k = 0; k < 51; ++k)
            worst = std::max(worst, std::abs(quantile_hjb_residual(table, lat, c, k, 1, gamma)));
    }
    return worst;
}

}  // namespace

TEST_CASE("analytic right branch nearly solves the quantile HJB equation") {
    const double r04 = max_right_residual(0.04), r02 = max_right_residual(0.02), r01 = max_right_residual(0.01);
    CHECK(r02 <= 1e-3);
    CHECK(r02 < r04);
    CHECK(r01 < r02);
    // Central differences are second order.
    CHECK(r04 / r02 > 3.0);
}

TEST_CASE("residual of constant and zero tables") {
    Lattice lat(0.02);
    StatisticsTable c(lat.num_cells(), 2, 5, 1.7);
    CHECK(quantile_hjb_residual(c, lat, 20, 2, 1, 0.3) == doctest::Approx(1.7 * std::log(0.3)));
    StatisticsTable z(lat.num_cells(), 2, 5);
    CHECK(quantile_hjb_residual(z, lat, 20, 2, 0, 0.3) == 0.0);
    CHECK_THROWS(quantile_hjb_residual(z, lat, 0, 2, 0, 0.3));
}

TEST_CASE("diffusive residual matches the generator of a quadratic") {
    // s(x, y) = x^2 + x y: grad (2x + y, x), hessian [[2, 1], [1, 0]].
    Lattice lat(0.1, 2);
    StatisticsTable t(lat.num_cells(), 1, 1);
    for (Cell c = 0; c < lat.num_cells(); ++c) {
        const Vec p = lat.point(c);
        t.set(c, 0, QuantileDistribution::make({p[0] * p[0] + p[0] * p[1]}));
    }
    const Cell c = lat.cell_at({4, 6});
    const Vec p = lat.point(c);
    const Vec f{0.3, -0.2}, cov{0.5, 0.1, 0.1, 0.2};
    const double s = p[0] * p[0] + p[0] * p[1];
    const double expected = f[0] * (2 * p[0] + p[1]) + f[1] * p[0] + std::log(0.5) * s + 0.5 * (cov[0] * 2 + 2 * cov[1] * 1);
    CHECK(quantile_hjb_residual(t, lat, c, 0, 0, f, cov, 0.5) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("W1 to the analytic law examples") {
    const auto exact = QuantileDistribution::gaussian(51, 0.4, 0.7);
    CHECK(w1_to_analytic(exact, 0.4, 0.7) == doctest::Approx(0.0).epsilon(1e-14));
    std::vector<double> shifted(exact.particles().begin(), exact.particles().end());
    for (auto& v : shifted) v += 0.25;
    CHECK(w1_to_analytic(QuantileDistribution::make(shifted), 0.4, 0.7) == doctest::Approx(0.25).epsilon(1e-12));

    const double s = 0.6;
    const auto narrow = QuantileDistribution::gaussian(21, 1.0, s);
    double oracle = 0.0;
    for (double tau : quantile_levels(21)) oracle += s * std::abs(normal_quantile(tau));
    CHECK(w1_to_analytic(narrow, 1.0, 2 * s) == doctest::Approx(oracle / 21).epsilon(1e-12));
}

TEST_CASE("W1 obeys the triangle inequality") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(9), b(9);
        for (auto& v : a) v = z(rng);
        for (auto& v : b) v = z(rng);
        const auto qa = QuantileDistribution::make(a), qb = QuantileDistribution::make(b);
        double between = 0.0;
        for (std::size_t k = 0; k < 9; ++k) between += std::abs(qa[k] - qb[k]) / 9.0;
        const double m = z(rng), s = std::abs(z(rng));
        CHECK(w1_to_analytic(qa, m, s) <= between + w1_to_analytic(qb, m, s) + 1e-12);
    }
}

TEST_CASE("error profile of the exact and the empty table") {
    const double gamma = 0.3;
    Lattice lat(0.02);
    const ToyEnvParams params;
    StatisticsTable exact(lat.num_cells(), 2, 51);
    for (Cell c = 0; c < lat.num_cells(); ++c) {
        const double x = lat.point(c)[0];
        for (int a = 0; a < 2; ++a) {
            const auto law = analytic_return_distribution(x, gamma, a == 1 ? 1 : -1);
            exact.set(c, a, QuantileDistribution::gaussian(51, law.mean, law.stddev));
        }
    }
    const ErrorProfile good = value_error_profile(exact, lat, params);
    CHECK(good.records.size() == 49);
    CHECK(good.max_abs_error() <= 1e-12);
    CHECK(good.mean_w1_error() <= 1e-12);

    const ErrorProfile zero = value_error_profile(StatisticsTable(lat.num_cells(), 2, 51), lat, params);
    for (const auto& r : zero.records) CHECK(r.abs_err == doctest::Approx(analytic_value(r.x, gamma)));
    const double xs[] = {0.7, 0.8, 0.9};
    CHECK(zero.mean_w1_error_at(xs) > 0.0);
}
