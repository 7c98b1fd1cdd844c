#include "qhjb/jko.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qhjb {

void JkoConfig::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("JKO tau must be positive");
    if (!(beta > 0.0)) throw std::invalid_argument("JKO beta must be positive");
    if (gd_steps < 0) throw std::invalid_argument("JKO gd_steps must be non-negative");
    if (!(gd_rate > 0.0)) throw std::invalid_argument("JKO gd_rate must be positive");
    if (max_halvings < 0) throw std::invalid_argument("JKO max_halvings must be non-negative");
}

double JkoConfig::proximal_value(const TransportProblem& problem, const TransportPlan& plan) const {
    return proximal == ProximalValue::entropic ? entropic_cost(problem, plan) : transport_cost(problem, plan);
}

KineticTerm::KineticTerm(const WeightedParticleSet& target, std::size_t n, KineticCoupling coupling)
    : coupling_(coupling), n_(n) {
    if (target.empty()) throw std::invalid_argument("kinetic term needs a non-empty target");
    if (n == 0) throw std::invalid_argument("kinetic term needs at least one particle");

    mean_ = target.mean();
    for (const auto& e : target.entries()) variance_ += e.weight * (e.location - mean_) * (e.location - mean_);
    if (coupling_ == KineticCoupling::independent) return;

    std::vector<WeightedParticle> sorted(target.entries().begin(), target.entries().end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.location < b.location; });
    const double total = target.total_mass();
    const double slice_mass = total / static_cast<double>(n);

    // Walks the quantile function once, handing each slice its share of every
    // particle; `visit(k, w, y)` sees slice k receive mass w at y.
    auto walk = [&](auto&& visit) {
        std::size_t k = 0;
        double room = slice_mass;
        for (const auto& e : sorted) {
            double w = e.weight;
            while (w > 0.0) {
                const double take = (k + 1 == n) ? w : std::min(w, room);
                visit(k, take, e.location);
                w -= take;
                room -= take;
                if (room <= 0.0 && k + 1 < n) {
                    ++k;
                    room = slice_mass;
                }
            }
        }
    };

    std::vector<double> mass(n, 0.0), moment(n, 0.0);
    walk([&](std::size_t k, double w, double y) {
        mass[k] += w;
        moment[k] += w * y;
    });
    slice_mean_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // A slice only misses mass through round-off; borrow its neighbour's location.
        slice_mean_[k] = mass[k] > 0.0 ? moment[k] / mass[k] : (k > 0 ? slice_mean_[k - 1] : sorted.front().location);
    }
    slice_var_.assign(n, 0.0);
    walk([&](std::size_t k, double w, double y) { slice_var_[k] += w * (y - slice_mean_[k]) * (y - slice_mean_[k]); });
    for (std::size_t k = 0; k < n; ++k) slice_var_[k] = mass[k] > 0.0 ? slice_var_[k] / mass[k] : 0.0;
}

namespace {

std::vector<std::size_t> ranks(const std::vector<double>& z) {
    std::vector<std::size_t> order(z.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z[a] < z[b]; });
    std::vector<std::size_t> rank(z.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
    return rank;
}

}  // namespace

double KineticTerm::energy(const std::vector<double>& z) const {
    if (z.size() != n_) throw std::invalid_argument("kinetic term particle count mismatch");
    const double inv_n = 1.0 / static_cast<double>(n_);
    double e = 0.0;
    if (coupling_ == KineticCoupling::independent) {
        for (double zi : z) e += (zi - mean_) * (zi - mean_) + variance_;
        return e * inv_n;
    }
    const auto rank = ranks(z);
    for (std::size_t i = 0; i < n_; ++i) {
        const std::size_t r = rank[i];
        e += (z[i] - slice_mean_[r]) * (z[i] - slice_mean_[r]) + slice_var_[r];
    }
    return e * inv_n;
}

std::vector<double> KineticTerm::gradient(const std::vector<double>& z) const {
    if (z.size() != n_) throw std::invalid_argument("kinetic term particle count mismatch");
    const double scale = 2.0 / static_cast<double>(n_);
    std::vector<double> g(n_);
    if (coupling_ == KineticCoupling::independent) {
        for (std::size_t i = 0; i < n_; ++i) g[i] = scale * (z[i] - mean_);
        return g;
    }
    const auto rank = ranks(z);
    for (std::size_t i = 0; i < n_; ++i) g[i] = scale * (z[i] - slice_mean_[rank[i]]);
    return g;
}

namespace {

[[noreturn]] void throw_unconverged(const TransportPlan& plan, const JkoConfig& cfg) {
    std::ostringstream msg;
    msg << "Sinkhorn failed to converge inside a JKO step after " << plan.iterations << " iterations (marginal error "
        << plan.marginal_error << ", tol " << cfg.sinkhorn.tol << ")";
    throw SinkhornConvergenceError(msg.str());
}

TransportPlan solve_checked(const TransportProblem& problem, const JkoConfig& cfg, const TransportPlan* warm,
                            JkoTrace* trace) {
    TransportPlan plan = solve(problem, cfg.sinkhorn, warm);
    if (trace) ++trace->sinkhorn_solves;
    if (!plan.converged) throw_unconverged(plan, cfg);
    return plan;
}

}  // namespace

double objective(const QuantileDistribution& candidate, const WeightedParticleSet& target,
                 const QuantileDistribution& anchor, const JkoConfig& cfg) {
    cfg.validate();
    if (candidate.size() != anchor.size()) throw std::invalid_argument("candidate and anchor sizes differ");
    const KineticTerm kinetic(target, candidate.size(), cfg.coupling);
    const std::vector<double> z(candidate.particles().begin(), candidate.particles().end());
    const auto problem = TransportProblem::uniform(z, anchor.particles(), cfg.beta);
    const TransportPlan plan = solve_checked(problem, cfg, nullptr, nullptr);
    return 2.0 * cfg.tau * kinetic.energy(z) + cfg.proximal_value(problem, plan);
}

QuantileDistribution jko_step(const QuantileDistribution& anchor, const WeightedParticleSet& target,
                              const JkoConfig& cfg, JkoTrace* trace) {
    cfg.validate();
    const std::size_t n = anchor.size();
    if (n == 0) throw std::invalid_argument("anchor must hold particles");
    const KineticTerm kinetic(target, n, cfg.coupling);

    std::vector<double> z(anchor.particles().begin(), anchor.particles().end());
    auto problem = TransportProblem::uniform(z, anchor.particles(), cfg.beta);
    TransportPlan plan = solve_checked(problem, cfg, nullptr, trace);
    double current = 2.0 * cfg.tau * kinetic.energy(z) + cfg.proximal_value(problem, plan);
    if (trace) trace->objectives.push_back(current);

    // Descent runs on the Wasserstein gradient: particle i carries mass 1/N,
    // so its velocity is N times the partial derivative.
    const double mass_scale = static_cast<double>(n);
    std::vector<double> trial(n);
    for (int step = 0; step < cfg.gd_steps; ++step) {
        std::vector<double> grad = kinetic.gradient(z);
        const std::vector<double> prox = cfg.proximal == ProximalValue::entropic
                                             ? source_gradient(problem, plan)
                                             : transport_cost_gradient(problem, plan);
        double norm = 0.0;
        double scale = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] = mass_scale * (2.0 * cfg.tau * grad[i] + prox[i]);
            norm = std::max(norm, std::abs(grad[i]));
            scale = std::max(scale, std::abs(z[i]));
        }
        if (cfg.gd_rate * norm <= cfg.min_displacement * scale) break;

        bool accepted = false;
        bool evaluated = false;
        TransportPlan failed;
        double rate = cfg.gd_rate;
        for (int h = 0; h <= cfg.max_halvings; ++h, rate *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = z[i] - rate * grad[i];
            // Both proximal values are non-negative.
            const double trial_kinetic = 2.0 * cfg.tau * kinetic.energy(trial);
            if (trial_kinetic > current) continue;
            problem.source = trial;
            TransportPlan trial_plan = solve(problem, cfg.sinkhorn, &plan);
            if (trace) ++trace->sinkhorn_solves;
            // A trial point the solver cannot resolve counts as rejected.
            if (!trial_plan.converged) {
                failed = std::move(trial_plan);
                continue;
            }
            evaluated = true;
            const double value = trial_kinetic + cfg.proximal_value(problem, trial_plan);
            if (value <= current) {
                z = trial;
                plan = std::move(trial_plan);
                current = value;
                accepted = true;
                break;
            }
        }
        problem.source = z;
        if (!evaluated && failed.rows > 0) throw_unconverged(failed, cfg);
        if (trace && accepted) trace->objectives.push_back(current);
        if (!accepted) break;
    }
    return QuantileDistribution::make(std::move(z));
}

}  // namespace qhjb
