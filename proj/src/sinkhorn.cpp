#include "qhjb/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qhjb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// exp(-60) is far below any marginal tolerance we care about.
constexpr double kLogCutoff = 60.0;

void check_weights(const std::vector<double>& w, std::size_t n, const char* what) {
    if (w.size() != n || n == 0) throw std::invalid_argument(std::string(what) + " weights have the wrong size");
    double total = 0.0;
    for (double x : w) {
        if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + " weights must be non-negative");
        total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + " weights must sum to one");
}

/// log sum_j exp(logits_j), skipping terms negligible relative to the max.
double log_sum_exp(const double* logits, std::size_t n) {
    double mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, logits[j]);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double d = logits[j] - mx;
        if (d > -kLogCutoff) s += std::exp(d);
    }
    return mx + std::log(s);
}

/// Running maximum of violations; NaN counts as infinitely bad.
double worse(double err, double x) { return x <= err ? err : (std::isnan(x) ? std::numeric_limits<double>::infinity() : x); }

}  // namespace

TransportProblem TransportProblem::uniform(std::span<const double> source, std::span<const double> target,
                                           double beta) {
    TransportProblem p;
    p.source.assign(source.begin(), source.end());
    p.target.assign(target.begin(), target.end());
    p.source_weights.assign(source.size(), 1.0 / static_cast<double>(source.size()));
    p.target_weights.assign(target.size(), 1.0 / static_cast<double>(target.size()));
    p.beta = beta;
    return p;
}

void TransportProblem::validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("inverse temperature must be positive");
    check_weights(source_weights, source.size(), "source");
    check_weights(target_weights, target.size(), "target");
}

namespace {

// Scalings beyond exp(+-kAbsorb) are folded back into the log potentials.
constexpr double kAbsorb = 30.0;
// exp underflows to zero below this.
constexpr double kUnderflow = -745.0;
// Scalings past this mean the kernel lost the row or column.
constexpr double kHuge = 1e300;
// Conditional probabilities below this are left out of the Newton Hessian.
constexpr double kNegligible = 1e-20;

/// Stabilized Sinkhorn state: the plan is K_ij u_i v_j with
/// K_ij = exp(f_i + g_j - beta C_ij); u and v stay near one between absorptions.
class Scaling {
public:
    Scaling(const std::vector<double>& bc, const std::vector<double>& a, const std::vector<double>& b,
            std::vector<double> f, std::vector<double> g)
        : n_(a.size()), m_(b.size()), bc_(bc), a_(a), b_(b), f_(std::move(f)), g_(std::move(g)),
          kernel_(n_ * m_), u_(n_, 1.0), v_(m_, 1.0), col_(m_), row_(n_), saved_u_(n_, 1.0), saved_f_(n_) {
        for (std::size_t i = 0; i < n_; ++i)
            if (a_[i] <= 0.0) f_[i] = kNegInf;
        for (std::size_t j = 0; j < m_; ++j)
            if (b_[j] <= 0.0) g_[j] = kNegInf;
        rebuild();
    }

    const std::vector<double>& f() const { return f_; }
    const std::vector<double>& g() const { return g_; }
    double kernel(std::size_t i, std::size_t j) const { return kernel_[i * m_ + j]; }

    /// `sweep` in the log domain, for when the kernel underflows.
    double log_sweep() {
        absorb_scalings();
        saved_u_ = u_;
        std::vector<double> logits(std::max(n_, m_));
        for (std::size_t j = 0; j < m_; ++j) {
            if (b_[j] <= 0.0) continue;
            for (std::size_t i = 0; i < n_; ++i) logits[i] = f_[i] - bc_[i * m_ + j];
            g_[j] = std::log(b_[j]) - log_sum_exp(logits.data(), n_);
        }
        double err = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < m_; ++j) logits[j] = g_[j] - bc_[i * m_ + j];
            const double lse = log_sum_exp(logits.data(), m_);
            const double row = a_[i] > 0.0 ? std::exp(f_[i] + lse) : 0.0;
            err = worse(err, std::abs(row - a_[i]));
            saved_f_[i] = f_[i];
            if (a_[i] > 0.0) f_[i] = std::log(a_[i]) - lse;
        }
        rebuild();
        return err;
    }

    /// Exact coordinate ascent on the semi-dual in the log domain: each column
    /// potential in turn is moved until that column's mass is exact with every
    /// row renormalized. Unlike a sweep it can cross saturated regions where
    /// the kernel entries that must carry mass have underflowed.
    void coordinate_sweep() {
        absorb_scalings();
        std::vector<double> logits(m_), rest(n_), gap(n_);
        for (std::size_t j = 0; j < m_; ++j) {
            if (b_[j] <= 0.0 || m_ == 1) continue;
            for (std::size_t i = 0; i < n_; ++i) {
                for (std::size_t k = 0; k < m_; ++k) logits[k] = k == j ? kNegInf : g_[k] - bc_[i * m_ + k];
                rest[i] = log_sum_exp(logits.data(), m_);
                gap[i] = g_[j] - bc_[i * m_ + j] - rest[i];
            }
            // Column mass as a function of the shift, increasing.
            auto mass = [&](double delta) {
                double total = 0.0;
                for (std::size_t i = 0; i < n_; ++i) {
                    if (a_[i] <= 0.0) continue;
                    const double z = gap[i] + delta;
                    total += a_[i] * (z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
                }
                return total;
            };
            double lo = 0.0, hi = 0.0;
            if (mass(0.0) < b_[j]) {
                for (hi = 1.0; mass(hi) < b_[j] && hi < kHuge; hi *= 2.0) lo = hi;
            } else {
                for (lo = -1.0; mass(lo) > b_[j] && lo > -kHuge; lo *= 2.0) hi = lo;
            }
            if (!(std::abs(lo) < kHuge && std::abs(hi) < kHuge)) continue;
            for (int iter = 0; iter < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++iter) {
                const double mid = 0.5 * (lo + hi);
                (mass(mid) < b_[j] ? lo : hi) = mid;
            }
            g_[j] += 0.5 * (lo + hi);
        }
        for (std::size_t i = 0; i < n_; ++i) {
            if (a_[i] <= 0.0) continue;
            for (std::size_t j = 0; j < m_; ++j) logits[j] = g_[j] - bc_[i * m_ + j];
            f_[i] = std::log(a_[i]) - log_sum_exp(logits.data(), m_);
        }
        rebuild();
    }

    /// Columns made exact, then rows measured and fixed. Returns the row
    /// violation measured before the fix.
    double sweep() {
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        const Eigen::Map<const RowMajor> k(kernel_.data(), static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(m_));
        Eigen::Map<Eigen::VectorXd> col(col_.data(), static_cast<Eigen::Index>(m_));
        Eigen::Map<Eigen::VectorXd> row(row_.data(), static_cast<Eigen::Index>(n_));
        col.noalias() = k.transpose() * Eigen::Map<const Eigen::VectorXd>(u_.data(), static_cast<Eigen::Index>(n_));
        for (std::size_t j = 0; j < m_; ++j)
            if (b_[j] > 0.0 && !(b_[j] / col_[j] < kHuge)) return log_sweep();
        for (std::size_t j = 0; j < m_; ++j)
            if (b_[j] > 0.0) v_[j] = b_[j] / col_[j];
        row.noalias() = k * Eigen::Map<const Eigen::VectorXd>(v_.data(), static_cast<Eigen::Index>(m_));
        double err = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            if (a_[i] > 0.0 && !(a_[i] / row_[i] < kHuge)) return log_sweep();
            err = worse(err, std::abs(u_[i] * row_[i] - a_[i]));
        }
        saved_u_ = u_;
        saved_f_ = f_;
        for (std::size_t i = 0; i < n_; ++i)
            if (a_[i] > 0.0) u_[i] = a_[i] / row_[i];
        return err;
    }

    /// Undoes the row fix of the last sweep, restoring the plan whose
    /// violation that sweep reported.
    void undo_row_fix() {
        const bool refit = saved_f_ != f_;
        u_ = saved_u_;
        if (refit) {
            f_ = saved_f_;
            rebuild();
        }
    }

    bool needs_absorb() const {
        const double hi = std::exp(kAbsorb), lo = std::exp(-kAbsorb);
        for (double x : u_)
            if (x > hi || x < lo) return true;
        for (double x : v_)
            if (x > hi || x < lo) return true;
        return false;
    }

    void absorb() {
        if (absorb_scalings()) rebuild();
    }

    /// Adds `df` to f and `dg` to g.
    void shift(const std::vector<double>& df, const std::vector<double>& dg) {
        absorb_scalings();
        for (std::size_t i = 0; i < n_; ++i)
            if (a_[i] > 0.0) f_[i] += df[i];
        for (std::size_t j = 0; j < m_; ++j)
            if (b_[j] > 0.0) g_[j] += dg[j];
        rebuild();
    }

    std::size_t rows() const { return n_; }
    std::size_t cols() const { return m_; }

private:
    // Returns whether any scaling differed from one.
    bool absorb_scalings() {
        bool changed = false;
        for (std::size_t i = 0; i < n_; ++i)
            if (a_[i] > 0.0 && u_[i] != 1.0) {
                f_[i] += std::log(u_[i]);
                u_[i] = 1.0;
                changed = true;
            }
        for (std::size_t j = 0; j < m_; ++j)
            if (b_[j] > 0.0 && v_[j] != 1.0) {
                g_[j] += std::log(v_[j]);
                v_[j] = 1.0;
                changed = true;
            }
        return changed;
    }

    void rebuild() {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < m_; ++j) {
                const double l = f_[i] + g_[j] - bc_[i * m_ + j];
                kernel_[i * m_ + j] = l > kUnderflow ? std::exp(l) : 0.0;
            }
    }

    std::size_t n_, m_;
    const std::vector<double>& bc_;
    const std::vector<double>& a_;
    const std::vector<double>& b_;
    std::vector<double> f_, g_, kernel_, u_, v_, col_, row_, saved_u_, saved_f_;
};

/// Newton ascent on the semi-dual h(g) = sum_j b_j g_j - sum_i a_i LSE_j(g_j - beta C_ij)
/// around the kernel's current g; `delta` is the offset from that g.
/// Row marginals are exact for every delta.
struct SemiDualNewton {
    const Scaling& base;
    const std::vector<double>& a;
    const std::vector<double>& b;
    std::size_t n, m;
    std::vector<double> w, t, pi, col;

    SemiDualNewton(const Scaling& base_, const std::vector<double>& a_, const std::vector<double>& b_)
        : base(base_), a(a_), b(b_), n(a_.size()), m(b_.size()), w(m), t(n), pi(n * m), col(m) {}

    // Fills t (row sums), pi (row conditionals), col (column sums); returns
    // h up to a constant, or -inf (leaving the fields unusable) when some
    // row lost all its mass.
    double evaluate(const std::vector<double>& delta) {
        double h = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            w[j] = b[j] > 0.0 ? std::exp(delta[j]) : 0.0;
            if (b[j] > 0.0) h += b[j] * delta[j];
        }
        std::fill(col.begin(), col.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (a[i] <= 0.0) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += base.kernel(i, j) * w[j];
            if (!(s > 0.0) || !std::isfinite(s)) return kNegInf;
            t[i] = s;
            h -= a[i] * std::log(s);
            const double inv = 1.0 / s;
            for (std::size_t j = 0; j < m; ++j) {
                const double p = base.kernel(i, j) * w[j] * inv;
                pi[i * m + j] = p;
                col[j] += a[i] * p;
            }
        }
        return h;
    }

    double violation() const {
        double err = 0.0;
        for (std::size_t j = 0; j < m; ++j) err = worse(err, std::abs(col[j] - b[j]));
        return err;
    }
    double residual() const {
        double r = 0.0;
        for (std::size_t j = 0; j < m; ++j) r += (col[j] - b[j]) * (col[j] - b[j]);
        return std::sqrt(r);
    }
};

}  // namespace

namespace {

TransportPlan solve_fixed(const TransportProblem& problem, const SinkhornOptions& options,
                          const TransportPlan* warm_start) {
    const std::size_t n = problem.source.size();
    const std::size_t m = problem.target.size();
    const double beta = problem.beta;
    const auto& a = problem.source_weights;
    const auto& b = problem.target_weights;

    std::vector<double> bc(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) bc[i * m + j] = beta * problem.cost(i, j);

    std::vector<double> f0(n, 0.0), g0(m, 0.0);
    const bool warm = warm_start && warm_start->u.size() == n && warm_start->v.size() == m;
    if (warm) {
        for (std::size_t i = 0; i < n; ++i) f0[i] = beta * warm_start->u[i];
        for (std::size_t j = 0; j < m; ++j) g0[j] = beta * warm_start->v[j];
    }
    Scaling scaling(bc, a, b, std::move(f0), std::move(g0));

    TransportPlan out;
    out.rows = n;
    out.cols = m;
    out.marginal_error = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < m; ++j)
        if (b[j] > 0.0) active.push_back(j);
    // The semi-dual is invariant to shifting g; pin the last active column.
    const std::size_t k = active.size() - 1;

    auto recenter = [&](const SemiDualNewton& newton, const std::vector<double>& delta) {
        std::vector<double> df(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            if (a[i] > 0.0) df[i] = std::log(a[i]) - std::log(newton.t[i]);
        scaling.shift(df, delta);
    };

    // Newton from the kernel's current g until converged or stalled. Rows are
    // exact throughout, so f is rebuilt from the final row sums.
    auto run_newton = [&](int& it) {
        SemiDualNewton newton(scaling, a, b);
        std::vector<double> delta(m, 0.0), trial(m);
        double h = newton.evaluate(delta);
        // A kernel row that underflowed entirely leaves nothing to differentiate.
        if (h == kNegInf) return false;
        bool done = false;
        for (; it < options.max_iter; ++it) {
            out.marginal_error = newton.violation();
            if (out.marginal_error <= options.tol) {
                done = true;
                break;
            }
            if (k == 0) break;

            // H = sum_i a_i (diag(pi_i) - pi_i pi_i^T) over the free columns,
            // accumulated over the entries of each row that carry mass.
            // The diagonal uses 1 - pi_ij summed from the other entries: rows
            // concentrated on one column would otherwise lose it to cancellation.
            const auto kk = static_cast<Eigen::Index>(k);
            Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(kk, kk);
            Eigen::VectorXd rhs(kk);
            for (std::size_t r = 0; r < k; ++r) rhs(r) = b[active[r]] - newton.col[active[r]];
            std::vector<std::size_t> support;
            for (std::size_t i = 0; i < n; ++i) {
                if (a[i] <= 0.0) continue;
                const double* pi = &newton.pi[i * m];
                support.clear();
                for (std::size_t r = 0; r < k; ++r)
                    if (pi[active[r]] > kNegligible) support.push_back(r);
                for (std::size_t x = 0; x < support.size(); ++x) {
                    const std::size_t r = support[x];
                    const double p = pi[active[r]];
                    double rest = 1.0 - p;
                    if (p > 0.5) {
                        rest = 0.0;
                        for (std::size_t j = 0; j < m; ++j)
                            if (j != active[r]) rest += pi[j];
                    }
                    hess(r, r) += a[i] * p * rest;
                    for (std::size_t y = 0; y < x; ++y) {
                        const std::size_t c = support[y];
                        const double off = a[i] * p * pi[active[c]];
                        hess(r, c) -= off;
                        hess(c, r) -= off;
                    }
                }
            }
            const double ridge = 1e-14 * hess.diagonal().cwiseAbs().maxCoeff();
            hess.diagonal().array() += ridge;
            const Eigen::VectorXd step = hess.ldlt().solve(rhs);
            const double slope = rhs.dot(step);
            if (!std::isfinite(slope) || slope <= 0.0) break;

            // Near the optimum the gain in h drops below round-off; a shrinking
            // column residual is then accepted instead.
            const double residual = newton.residual();
            double s = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 40; ++ls, s *= 0.5) {
                trial = delta;
                for (std::size_t r = 0; r < k; ++r) trial[active[r]] += s * step(static_cast<Eigen::Index>(r));
                const double h_trial = newton.evaluate(trial);
                if (h_trial >= h + 1e-4 * s * slope ||
                    (h_trial >= h - 1e-12 * std::abs(h) && newton.residual() <= (1.0 - 1e-4 * s) * residual)) {
                    delta = trial;
                    h = h_trial;
                    moved = true;
                    break;
                }
            }
            if (!moved) {
                newton.evaluate(delta);
                out.marginal_error = newton.violation();
                break;
            }
            double reach = 0.0;
            for (double d : delta) reach = std::max(reach, std::abs(d));
            if (reach > kAbsorb) {
                // Re-center the kernel so that small entries are not lost.
                ++it;
                recenter(newton, delta);
                std::fill(delta.begin(), delta.end(), 0.0);
                h = newton.evaluate(delta);
                if (h == kNegInf) return false;
            }
        }
        recenter(newton, delta);
        return done;
    };

    // Sweeps until they stall, then Newton; a stalled Newton hands back to sweeps.
    const int batch = options.newton_after < 0 ? options.max_iter : std::max(options.newton_after, 1);
    auto solve_loop = [&](int& it) {
        while (it < options.max_iter && !out.converged) {
            const int stop = std::min(options.max_iter, it + batch);
            for (; it < stop; ++it) {
                const double err = scaling.sweep();
                out.marginal_error = err;
                if (err <= options.tol) {
                    scaling.undo_row_fix();
                    out.converged = true;
                    ++it;
                    break;
                }
                if (scaling.needs_absorb()) scaling.absorb();
            }
            if (out.converged || it >= options.max_iter || options.newton_after < 0) break;
            scaling.absorb();
            out.converged = run_newton(it);
            if (!out.converged && it < options.max_iter) {
                scaling.coordinate_sweep();
                ++it;
            }
        }
    };

    int it = 0;
    // The marginals of the plan actually returned decide convergence.
    auto plan_error = [&]() {
        double err = 0.0;
        std::vector<double> col(m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                row += scaling.kernel(i, j);
                col[j] += scaling.kernel(i, j);
            }
            err = worse(err, std::abs(row - a[i]));
        }
        for (std::size_t j = 0; j < m; ++j) err = worse(err, std::abs(col[j] - b[j]));
        return err;
    };
    for (;;) {
        solve_loop(it);
        if (!out.converged) break;
        scaling.absorb();
        out.marginal_error = plan_error();
        if (out.marginal_error <= options.tol) break;
        out.converged = false;
        if (it >= options.max_iter) break;
    }
    out.iterations = it;
    scaling.absorb();

    const auto& f = scaling.f();
    const auto& g = scaling.g();
    out.plan.resize(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.plan[i * m + j] = scaling.kernel(i, j);
    out.u.resize(n);
    out.v.resize(m);
    // Zero-weight entries keep a finite (but meaningless) dual so warm starts stay usable.
    for (std::size_t i = 0; i < n; ++i) out.u[i] = std::isfinite(f[i]) ? f[i] / beta : 0.0;
    for (std::size_t j = 0; j < m; ++j) out.v[j] = std::isfinite(g[j]) ? g[j] / beta : 0.0;
    return out;
}

// Cold starts whose largest scaled cost exceeds this anneal beta upward by
// kAnnealFactor per stage, warm-starting each stage from the previous one.
constexpr double kAnnealSpan = 1e6;
constexpr double kAnnealFactor = 10.0;

}  // namespace

TransportPlan solve(const TransportProblem& problem, const SinkhornOptions& options,
                    const TransportPlan* warm_start) {
    problem.validate();
    const bool warm = warm_start && warm_start->u.size() == problem.source.size() &&
                      warm_start->v.size() == problem.target.size();
    double span = 0.0;
    for (std::size_t i = 0; i < problem.source.size(); ++i)
        for (std::size_t j = 0; j < problem.target.size(); ++j) span = std::max(span, problem.cost(i, j));
    span *= problem.beta;
    if (warm || !(span > kAnnealSpan)) return solve_fixed(problem, options, warm_start);

    SinkhornOptions stage_options = options;
    stage_options.tol = std::max(options.tol, 1e-6);
    TransportProblem stage = problem;
    stage.beta = problem.beta * kAnnealSpan / span;
    TransportPlan plan = solve_fixed(stage, stage_options, nullptr);
    int iterations = plan.iterations;
    for (stage.beta *= kAnnealFactor; stage.beta < problem.beta; stage.beta *= kAnnealFactor) {
        plan = solve_fixed(stage, stage_options, &plan);
        iterations += plan.iterations;
    }
    plan = solve_fixed(problem, options, &plan);
    plan.iterations += iterations;
    return plan;
}

double transport_cost(const TransportProblem& problem, const TransportPlan& plan) {
    double total = 0.0;
    for (std::size_t i = 0; i < plan.rows; ++i)
        for (std::size_t j = 0; j < plan.cols; ++j) total += plan(i, j) * problem.cost(i, j);
    return total;
}

double entropic_cost(const TransportProblem& problem, const TransportPlan& plan) {
    // log P_ij = beta (u_i + v_j - C_ij) turns the KL sum into marginal sums.
    std::vector<double> col(plan.cols, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < plan.rows; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < plan.cols; ++j) {
            row += plan(i, j);
            col[j] += plan(i, j);
        }
        if (row > 0.0) total += row * (plan.u[i] - std::log(problem.source_weights[i]) / problem.beta);
    }
    for (std::size_t j = 0; j < plan.cols; ++j)
        if (col[j] > 0.0) total += col[j] * (plan.v[j] - std::log(problem.target_weights[j]) / problem.beta);
    return total;
}

std::vector<double> source_gradient(const TransportProblem& problem, const TransportPlan& plan) {
    std::vector<double> grad(plan.rows, 0.0);
    for (std::size_t i = 0; i < plan.rows; ++i)
        for (std::size_t j = 0; j < plan.cols; ++j)
            grad[i] += 2.0 * plan(i, j) * (problem.source[i] - problem.target[j]);
    return grad;
}

std::vector<double> transport_cost_gradient(const TransportProblem& problem, const TransportPlan& plan) {
    const std::size_t n = plan.rows, m = plan.cols;
    const double beta = problem.beta;
    const auto& a = problem.source_weights;
    const auto& b = problem.target_weights;

    // Adjoint of the marginal constraints: [diag(a) P; P^T diag(b)] [l; r] = [P C 1; P^T C 1].
    // The system is singular along (1, -1); the last column potential is pinned to zero.
    const auto dim = static_cast<Eigen::Index>(n + m - 1);
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        sys(r, r) = a[i];
        for (std::size_t j = 0; j < m; ++j) {
            const double pc = plan(i, j) * problem.cost(i, j);
            rhs(r) += pc;
            if (j + 1 == m) continue;
            const auto c = static_cast<Eigen::Index>(n + j);
            sys(r, c) = sys(c, r) = plan(i, j);
            rhs(c) += pc;
        }
    }
    for (std::size_t j = 0; j + 1 < m; ++j) {
        const auto c = static_cast<Eigen::Index>(n + j);
        sys(c, c) = b[j];
    }
    const double ridge = 1e-14 * sys.diagonal().cwiseAbs().maxCoeff();
    sys.diagonal().array() += ridge;
    const Eigen::VectorXd adj = sys.ldlt().solve(rhs);

    std::vector<double> grad(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double col = j + 1 == m ? 0.0 : adj(static_cast<Eigen::Index>(n + j));
            const double sensitivity = 1.0 + beta * (adj(static_cast<Eigen::Index>(i)) + col - problem.cost(i, j));
            grad[i] += 2.0 * plan(i, j) * (problem.source[i] - problem.target[j]) * sensitivity;
        }
    return grad;
}

TransportValue value(const TransportProblem& problem, const SinkhornOptions& options) {
    const TransportPlan plan = solve(problem, options);
    return {transport_cost(problem, plan), plan.converged};
}

TransportGradient grad_source(const TransportProblem& problem, const SinkhornOptions& options) {
    const TransportPlan plan = solve(problem, options);
    return {transport_cost_gradient(problem, plan), plan.converged};
}

double exact_w2_squared_uniform(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("sorted matching needs equal, non-empty sizes");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) total += (x[i] - y[i]) * (x[i] - y[i]);
    return total / static_cast<double>(x.size());
}

}  // namespace qhjb
