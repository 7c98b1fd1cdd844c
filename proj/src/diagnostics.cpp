#include "qhjb/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "csv.hpp"

namespace qhjb {

double quantile_hjb_residual(const StatisticsTable& table, const Lattice& lattice, Cell cell, std::size_t k,
                             int action, const Vec& drift, const Vec& covariance, double gamma,
                             double reward_rate) {
    if (lattice.is_boundary(cell)) throw std::domain_error("HJB residual needs an interior cell");
    const int d = lattice.dim();
    if (static_cast<int>(drift.size()) != d || static_cast<int>(covariance.size()) != d * d)
        throw std::invalid_argument("dynamics shape does not match the lattice");
    if (k >= table.n_quantiles()) throw std::out_of_range("quantile index out of range");

    const double eps = lattice.epsilon();
    auto s = [&](const std::vector<int>& off) { return table.at(lattice.offset_clamped(cell, off), action)[k]; };
    const std::vector<int> origin(d, 0);
    const double centre = s(origin);

    double residual = reward_rate + std::log(gamma) * centre;
    for (int i = 0; i < d; ++i) {
        std::vector<int> up(d, 0), down(d, 0);
        up[i] = 1;
        down[i] = -1;
        const double grad = (s(up) - s(down)) / (2.0 * eps);
        const double second = (s(up) - 2.0 * centre + s(down)) / (eps * eps);
        residual += drift[i] * grad + 0.5 * covariance[i * d + i] * second;
        for (int j = 0; j < d; ++j) {
            if (j == i || covariance[i * d + j] == 0.0) continue;
            std::vector<int> pp(d, 0), pm(d, 0), mp(d, 0), mm(d, 0);
            pp[i] = 1, pp[j] = 1;
            pm[i] = 1, pm[j] = -1;
            mp[i] = -1, mp[j] = 1;
            mm[i] = -1, mm[j] = -1;
            const double mixed = (s(pp) - s(pm) - s(mp) + s(mm)) / (4.0 * eps * eps);
            residual += 0.5 * covariance[i * d + j] * mixed;
        }
    }
    return residual;
}

double quantile_hjb_residual(const StatisticsTable& table, const Lattice& lattice, Cell cell, std::size_t k,
                             int action, double gamma) {
    return quantile_hjb_residual(table, lattice, cell, k, action, Vec{ToyEnv::velocity(action)}, Vec{0.0}, gamma);
}

double w1_to_analytic(const QuantileDistribution& q, double mean, double stddev) {
    if (!(stddev >= 0.0)) throw std::invalid_argument("standard deviation must be non-negative");
    const auto levels = quantile_levels(q.size());
    double total = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) total += std::abs(q[k] - (mean + stddev * normal_quantile(levels[k])));
    return total / static_cast<double>(q.size());
}

double ErrorProfile::max_abs_error() const {
    double m = 0.0;
    for (const auto& r : records) m = std::max(m, r.abs_err);
    return m;
}

double ErrorProfile::mean_abs_error() const {
    if (records.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : records) s += r.abs_err;
    return s / static_cast<double>(records.size());
}

double ErrorProfile::mean_w1_error() const {
    if (records.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : records) s += r.w1_err;
    return s / static_cast<double>(records.size());
}

double ErrorProfile::mean_w1_error_at(std::span<const double> xs) const {
    if (records.empty() || xs.empty()) throw std::invalid_argument("no records to average");
    double s = 0.0;
    for (double x : xs) {
        const auto it = std::min_element(records.begin(), records.end(), [&](const auto& a, const auto& b) {
            return std::abs(a.x - x) < std::abs(b.x - x);
        });
        s += it->w1_err;
    }
    return s / static_cast<double>(xs.size());
}

void ErrorProfile::write_csv(std::ostream& out) const {
    out << "x,v_hat,v_star,abs_err,w1_err\n";
    for (const auto& r : records)
        out << csv::format(r.x) << ',' << csv::format(r.v_hat) << ',' << csv::format(r.v_star) << ','
            << csv::format(r.abs_err) << ',' << csv::format(r.w1_err) << '\n';
}

ErrorProfile value_error_profile(const StatisticsTable& table, const Lattice& lattice, const ToyEnvParams& params) {
    if (lattice.dim() != 1) throw std::invalid_argument("value error profile needs a 1-D lattice");
    ErrorProfile profile;
    for (Cell c = 0; c < lattice.num_cells(); ++c) {
        if (lattice.is_boundary(c)) continue;
        const double x = lattice.point(c)[0];
        const auto& q = table.at(c, table.greedy_action(c));
        const ReturnLaw law =
            analytic_return_distribution(x, params.gamma, analytic_greedy_direction(x, params.gamma, params), params);
        ErrorRecord r;
        r.x = x;
        r.v_hat = q.mean();
        r.v_star = analytic_value(x, params.gamma, params);
        r.abs_err = std::abs(r.v_hat - r.v_star);
        r.w1_err = w1_to_analytic(q, law.mean, law.stddev);
        profile.records.push_back(r);
    }
    return profile;
}

}  // namespace qhjb
