#include "qhjb/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qhjb {

double Gaussian::stddev() const { return std::sqrt(variance); }

void ToyEnvParams::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (!(reward_right.variance > 0.0) || !(reward_left.variance > 0.0))
        throw std::invalid_argument("terminal reward variances must be positive");
    if (!(obs_frequency > 0.0)) throw std::invalid_argument("obs_frequency must be positive");
}

ToyEnv::ToyEnv(ToyEnvParams params) : params_(params) { params_.validate(); }

double ToyEnv::velocity(int action) {
    if (action == 0) return -1.0;
    if (action == 1) return 1.0;
    throw std::out_of_range("toy env action index must be 0 or 1, got " + std::to_string(action));
}

const Gaussian& ToyEnv::terminal_reward(double x) const {
    return x >= 0.5 ? params_.reward_right : params_.reward_left;
}

double ToyEnv::v_min() const {
    return std::min(params_.reward_right.mean - 4.0 * params_.reward_right.stddev(),
                    params_.reward_left.mean - 4.0 * params_.reward_left.stddev());
}

double ToyEnv::v_max() const {
    return std::max(params_.reward_right.mean + 4.0 * params_.reward_right.stddev(),
                    params_.reward_left.mean + 4.0 * params_.reward_left.stddev());
}

Transition ToyEnv::simulate_step(const EnvState& state, int action, double delta, Rng& rng) const {
    if (!(delta > 0.0)) throw std::invalid_argument("step duration must be positive");
    if (state.terminal) throw std::logic_error("cannot step from a terminal state");
    if (state.x.size() != 1) throw std::invalid_argument("toy env state must be one-dimensional");

    const double x = state.x[0];
    const double x_next = std::clamp(x + velocity(action) * delta, 0.0, 1.0);
    const bool terminal = x_next <= 0.0 || x_next >= 1.0;

    Transition t;
    t.x = state;
    t.action = action;
    t.next = EnvState{{x_next}, terminal};
    t.delta = delta;
    t.terminal = terminal;
    if (terminal) {
        const Gaussian& law = terminal_reward(x_next);
        std::normal_distribution<double> dist(law.mean, law.stddev());
        t.reward = dist(rng);
    }
    return t;
}

ItoEnv::ItoEnv(int dim, int num_actions, double lo, double hi, Drift drift, Diffusion diffusion,
               ExitReward exit_reward)
    : dim_(dim),
      num_actions_(num_actions),
      lo_(lo),
      hi_(hi),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)),
      exit_reward_(std::move(exit_reward)) {
    if (dim < 1 || num_actions < 1 || !(hi > lo))
        throw std::invalid_argument("invalid Ito environment shape");
}

Transition ItoEnv::simulate_step(const EnvState& state, int action, double delta, Rng& rng) const {
    if (!(delta > 0.0)) throw std::invalid_argument("step duration must be positive");
    if (state.terminal) throw std::logic_error("cannot step from a terminal state");
    if (static_cast<int>(state.x.size()) != dim_)
        throw std::invalid_argument("state dimension mismatch");

    const Vec f = drift_(state.x, action);
    const Vec sigma = diffusion_(state.x, action);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec noise(dim_);
    for (auto& n : noise) n = normal(rng) * std::sqrt(delta);

    Vec next(dim_);
    bool exited = false;
    for (int i = 0; i < dim_; ++i) {
        double v = state.x[i] + f[i] * delta;
        for (int j = 0; j < dim_; ++j) v += sigma[i * dim_ + j] * noise[j];
        if (v <= lo_ || v >= hi_) exited = true;
        next[i] = std::clamp(v, lo_, hi_);
    }

    Transition t;
    t.x = state;
    t.action = action;
    t.next = EnvState{next, exited};
    t.delta = delta;
    t.terminal = exited;
    if (exited) t.reward = exit_reward_(next, rng);
    return t;
}

namespace {

void check_domain(double x, double gamma) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("x must lie in [0, 1]");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("gamma must lie in (0, 1)");
}

}  // namespace

double analytic_value(double x, double gamma, const ToyEnvParams& params) {
    check_domain(x, gamma);
    return std::max(params.reward_right.mean * std::pow(gamma, 1.0 - x),
                    params.reward_left.mean * std::pow(gamma, x));
}

double analytic_kink(double gamma, const ToyEnvParams& params) {
    // mu_R gamma^(1-x) = mu_L gamma^x
    const double lg = std::log(gamma);
    return (std::log(params.reward_right.mean / params.reward_left.mean) + lg) / (2.0 * lg);
}

int analytic_greedy_direction(double x, double gamma, const ToyEnvParams& params) {
    check_domain(x, gamma);
    return x > analytic_kink(gamma, params) ? 1 : -1;
}

ReturnLaw analytic_return_distribution(double x, double gamma, int direction,
                                       const ToyEnvParams& params) {
    check_domain(x, gamma);
    if (direction != 1 && direction != -1) throw std::invalid_argument("direction must be +1 or -1");
    const double exit_time = direction > 0 ? 1.0 - x : x;
    const Gaussian& law = direction > 0 ? params.reward_right : params.reward_left;
    const double discount = std::pow(gamma, exit_time);
    return {discount * law.mean, discount * law.stddev()};
}

}  // namespace qhjb
