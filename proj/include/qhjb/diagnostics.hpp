#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "qhjb/agents.hpp"
#include "qhjb/distributions.hpp"
#include "qhjb/env.hpp"
#include "qhjb/lattice.hpp"

namespace qhjb {

/// Left side of the per-quantile HJB equation
///   <grad s_k, f> + r + log(gamma) s_k + 1/2 tr(sigma sigma^T hess s_k)
/// at an interior cell, using central differences on s(., action).
/// `drift` has d entries, `covariance` is the row-major d x d sigma sigma^T.
double quantile_hjb_residual(const StatisticsTable& table, const Lattice& lattice, Cell cell, std::size_t k,
                             int action, const Vec& drift, const Vec& covariance, double gamma,
                             double reward_rate = 0.0);

/// Particle environment dynamics (drift = action velocity, no diffusion).
double quantile_hjb_residual(const StatisticsTable& table, const Lattice& lattice, Cell cell, std::size_t k,
                             int action, double gamma);

/// W1 between the particles and the midpoint-quantile discretisation of
/// N(mean, std^2) with the same N.
double w1_to_analytic(const QuantileDistribution& q, double mean, double stddev);

struct ErrorRecord {
    double x = 0.0;
    double v_hat = 0.0;
    double v_star = 0.0;
    double abs_err = 0.0;
    double w1_err = 0.0;
};

struct ErrorProfile {
    std::vector<ErrorRecord> records;

    double max_abs_error() const;
    double mean_abs_error() const;
    double mean_w1_error() const;
    /// Mean W1 error over the records nearest to each requested x.
    double mean_w1_error_at(std::span<const double> xs) const;

    /// Columns x, v_hat, v_star, abs_err, w1_err.
    void write_csv(std::ostream& out) const;
};

/// Greedy-action value and return-law error against the particle
/// environment's closed form, over every interior cell of a 1-D lattice.
ErrorProfile value_error_profile(const StatisticsTable& table, const Lattice& lattice, const ToyEnvParams& params);

}  // namespace qhjb
