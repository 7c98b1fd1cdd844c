#pragma once

#include <functional>
#include <random>
#include <vector>

namespace qhjb {

using Rng = std::mt19937_64;
using Vec = std::vector<double>;

struct EnvState {
    Vec x;
    bool terminal = false;
};

/// One observed step of the controlled process.
///
/// `reward` is the total reward collected over the step, not a rate. For the
/// particle environment it is zero except on the exit step, where it carries
/// the whole terminal payment.
struct Transition {
    EnvState x;
    int action = 0;
    double reward = 0.0;
    EnvState next;
    double delta = 0.0;  // seconds
    bool terminal = false;
};

struct Gaussian {
    double mean = 0.0;
    double variance = 1.0;
    double stddev() const;
};

struct ToyEnvParams {
    double gamma = 0.3;
    Gaussian reward_right{2.0, 2.0};
    Gaussian reward_left{1.0, 1.0};
    double obs_frequency = 1000.0;  // Hz

    void validate() const;
    double step_duration() const { return 1.0 / obs_frequency; }
};

/// Particle on [0, 1] moving at unit speed, x' = a, with actions {-1, +1}.
/// Exiting at 1 pays N(2, 2); exiting at 0 pays N(1, 1).
class ToyEnv {
public:
    static constexpr int kNumActions = 2;

    explicit ToyEnv(ToyEnvParams params);

    const ToyEnvParams& params() const { return params_; }
    int num_actions() const { return kNumActions; }
    int dim() const { return 1; }

    /// Velocity of action index 0 / 1.
    static double velocity(int action);

    Transition simulate_step(const EnvState& state, int action, double delta, Rng& rng) const;

    /// Terminal law paid at boundary point `x` (0 or 1).
    const Gaussian& terminal_reward(double x) const;

    /// Lower and upper return bounds used for histogram export.
    double v_min() const;
    double v_max() const;

private:
    ToyEnvParams params_;
};

/// Generic Ito diffusion dX = f(X, a) dt + sigma(X, a) dB on a box, simulated by
/// Euler-Maruyama. Leaving the box terminates and pays `exit_reward`.
class ItoEnv {
public:
    using Drift = std::function<Vec(const Vec&, int)>;
    /// Row-major d x d diffusion matrix.
    using Diffusion = std::function<Vec(const Vec&, int)>;
    using ExitReward = std::function<double(const Vec&, Rng&)>;

    ItoEnv(int dim, int num_actions, double lo, double hi, Drift drift, Diffusion diffusion,
           ExitReward exit_reward);

    int dim() const { return dim_; }
    int num_actions() const { return num_actions_; }

    Transition simulate_step(const EnvState& state, int action, double delta, Rng& rng) const;

private:
    int dim_;
    int num_actions_;
    double lo_;
    double hi_;
    Drift drift_;
    Diffusion diffusion_;
    ExitReward exit_reward_;
};

/// Optimal expected discounted return of the particle environment.
double analytic_value(double x, double gamma, const ToyEnvParams& params = {});

/// Point where moving left and moving right are equally valuable.
double analytic_kink(double gamma, const ToyEnvParams& params = {});

struct ReturnLaw {
    double mean = 0.0;
    double stddev = 0.0;
};

/// Discounted terminal reward law when moving in `direction` (+1 or -1) from x
/// at unit speed until exit.
ReturnLaw analytic_return_distribution(double x, double gamma, int direction,
                                       const ToyEnvParams& params = {});

/// Direction (+1 / -1) of the optimal policy at x.
int analytic_greedy_direction(double x, double gamma, const ToyEnvParams& params = {});

}  // namespace qhjb
