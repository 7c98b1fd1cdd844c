#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qhjb {

/// Entropic optimal transport between two weighted point sets on the real
/// line with squared-distance cost.
struct TransportProblem {
    std::vector<double> source;
    std::vector<double> source_weights;
    std::vector<double> target;
    std::vector<double> target_weights;
    double beta = 1000.0;  // inverse temperature

    /// Equal weights on both sides.
    static TransportProblem uniform(std::span<const double> source, std::span<const double> target,
                                    double beta);

    void validate() const;
    double cost(std::size_t i, std::size_t j) const {
        const double d = source[i] - target[j];
        return d * d;
    }
};

struct SinkhornOptions {
    double tol = 1e-8;  // max absolute marginal violation
    int max_iter = 10000;
    /// Sinkhorn sweeps before switching to Newton steps on the semi-dual;
    /// nearly decoupled clusters make plain sweeps crawl. Negative disables.
    int newton_after = 5;
};

struct TransportPlan {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> plan;  // row-major
    /// Dual potentials in cost units: plan_ij = exp(beta * (u_i + v_j - C_ij)).
    std::vector<double> u;
    std::vector<double> v;
    int iterations = 0;
    bool converged = false;
    double marginal_error = 0.0;

    double operator()(std::size_t i, std::size_t j) const { return plan[i * cols + j]; }
};

/// Log-domain Sinkhorn iterations, finished by damped Newton steps on the
/// semi-dual when the sweeps stall. `warm_start`, when given and of matching
/// shape, seeds the dual potentials. Non-convergence is reported through
/// `TransportPlan::converged`, never thrown. Both phases count toward
/// `max_iter`.
TransportPlan solve(const TransportProblem& problem, const SinkhornOptions& options = {},
                    const TransportPlan* warm_start = nullptr);

/// <P, C> for a given plan.
double transport_cost(const TransportProblem& problem, const TransportPlan& plan);

/// <P, C> + (1/beta) KL(P | a b^T): the entropic objective the plan minimizes.
/// Its gradient in the source locations is exactly `source_gradient`. Reads
/// the plan's potentials, so the plan must come from `solve`.
double entropic_cost(const TransportProblem& problem, const TransportPlan& plan);

/// d<P, C>/dx_i with the plan held fixed: sum_j 2 P_ij (x_i - y_j).
std::vector<double> source_gradient(const TransportProblem& problem, const TransportPlan& plan);

/// d<P*, C>/dx_i with the plan moving with the source: the fixed-plan term
/// plus the plan's sensitivity through its marginal constraints.
std::vector<double> transport_cost_gradient(const TransportProblem& problem, const TransportPlan& plan);

struct TransportValue {
    double value = 0.0;
    bool converged = false;
};

struct TransportGradient {
    std::vector<double> gradient;
    bool converged = false;
};

TransportValue value(const TransportProblem& problem, const SinkhornOptions& options = {});
/// Gradient of `value`, i.e. `transport_cost_gradient` at the solved plan.
TransportGradient grad_source(const TransportProblem& problem, const SinkhornOptions& options = {});

/// Exact squared 2-Wasserstein distance between two equal-size uniform sets
/// (sorted matching).
double exact_w2_squared_uniform(std::span<const double> a, std::span<const double> b);

}  // namespace qhjb
