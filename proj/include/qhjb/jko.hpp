#pragma once

#include <stdexcept>
#include <vector>

#include "qhjb/distributions.hpp"
#include "qhjb/sinkhorn.hpp"

namespace qhjb {

/// How candidate particles Z and target particles Z' are paired inside the
/// kinetic term E(Z - Z')^2.
enum class KineticCoupling {
    /// Z and Z' independent: each particle is pulled toward the target mean.
    independent,
    /// Quantile (rank) coupling: E(Z - Z')^2 = W2^2(candidate, target), each
    /// particle is pulled toward its own slice of the target.
    comonotone,
};

/// Which value of the entropic transport stands in for W2^beta in the
/// objective. Descent follows the exact gradient of the chosen value.
enum class ProximalValue {
    /// <P*, C>, the transport cost of the entropic plan.
    transport_cost,
    /// <P*, C> + KL(P* | a b^T) / beta.
    entropic,
};

struct JkoConfig {
    double tau = 0.05;  // gradient-flow time step
    double beta = 1000.0;
    int gd_steps = 50;
    double gd_rate = 1.2;  // 0.1 * (V_max - V_min) for the particle environment
    int max_halvings = 40;
    /// Descent stops once a full step would move no particle further than
    /// this, relative to max(1, |z|).
    double min_displacement = 1e-10;
    KineticCoupling coupling = KineticCoupling::independent;
    ProximalValue proximal = ProximalValue::transport_cost;
    SinkhornOptions sinkhorn{};

    void validate() const;
    double proximal_value(const TransportProblem& problem, const TransportPlan& plan) const;
};

class SinkhornConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precomputed target statistics for the kinetic term.
class KineticTerm {
public:
    KineticTerm(const WeightedParticleSet& target, std::size_t n, KineticCoupling coupling);

    /// E(Z - Z')^2 with Z uniform over `z`.
    double energy(const std::vector<double>& z) const;
    std::vector<double> gradient(const std::vector<double>& z) const;

private:
    KineticCoupling coupling_;
    std::size_t n_;
    double mean_ = 0.0;
    double variance_ = 0.0;
    // Per-rank slice mean and within-slice variance (comonotone only).
    std::vector<double> slice_mean_;
    std::vector<double> slice_var_;
};

/// 2 tau E(Z - Z')^2 + W2^beta(candidate, anchor).
double objective(const QuantileDistribution& candidate, const WeightedParticleSet& target,
                 const QuantileDistribution& anchor, const JkoConfig& cfg);

struct JkoTrace {
    std::vector<double> objectives;  // accepted iterates, starting at the anchor
    int sinkhorn_solves = 0;
};

/// One minimizing-movements step: gradient descent with backtracking over
/// particle locations, started at the anchor. Returns sorted particles.
QuantileDistribution jko_step(const QuantileDistribution& anchor, const WeightedParticleSet& target,
                              const JkoConfig& cfg, JkoTrace* trace = nullptr);

}  // namespace qhjb
