#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "qhjb/distributions.hpp"
#include "qhjb/env.hpp"
#include "qhjb/jko.hpp"
#include "qhjb/lattice.hpp"

namespace qhjb {

/// Quantile statistics s(cell, action), one sorted N-particle set per entry.
class StatisticsTable {
public:
    StatisticsTable(std::size_t num_cells, int num_actions, std::size_t n_quantiles, double init = 0.0);

    std::size_t num_cells() const { return num_cells_; }
    int num_actions() const { return num_actions_; }
    std::size_t n_quantiles() const { return n_; }

    const QuantileDistribution& at(Cell cell, int action) const;
    void set(Cell cell, int action, QuantileDistribution q);

    /// argmax_a mean(s(cell, a)); ties go to the smallest action index.
    int greedy_action(Cell cell) const;

    /// Columns cell_index, action, k, tau_k, quantile_value (k is 1-based).
    void write_csv(std::ostream& out) const;
    static StatisticsTable read_csv(std::istream& in, std::size_t num_cells, int num_actions);

private:
    std::size_t index(Cell cell, int action) const;

    std::size_t num_cells_;
    int num_actions_;
    std::size_t n_;
    std::vector<QuantileDistribution> entries_;
};

/// Greedy with probability 1 - explore_eps, otherwise uniform over actions.
int select_action(const StatisticsTable& table, Cell cell, double explore_eps, Rng& rng);

struct AgentConfig {
    double epsilon_lattice = 0.02;
    std::size_t n_quantiles = 51;
    double gamma = 0.3;
    double tau = 0.25;
    double beta = 1000.0;
    double alpha = 0.1;  // model learning rate
    double explore_eps = 1.0;
    double qtd_lr = 0.1;
    int gd_steps = 2;
    double gd_rate = 0.3;
    int max_halvings = 2;
    KineticCoupling coupling = KineticCoupling::comonotone;
    ProximalValue proximal = ProximalValue::entropic;
    SinkhornOptions sinkhorn{1e-6, 10000, 5};

    void validate() const;
    JkoConfig jko() const;
};

/// Running Gaussian fit of rewards paid on exit through one boundary cell.
struct TerminalRewardStats {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double r);
    double variance() const { return count > 0 ? m2 / static_cast<double>(count) : 0.0; }
};

/// Model-based continuous-time distributional update: finite-difference
/// Bellman targets mixed over lattice neighbours, then one JKO step.
class FdwgfAgent {
public:
    FdwgfAgent(AgentConfig cfg, Lattice lattice, int num_actions);

    const AgentConfig& config() const { return cfg_; }
    const Lattice& lattice() const { return lattice_; }
    const StatisticsTable& table() const { return table_; }
    StatisticsTable& table() { return table_; }
    const LatticeModel& model() const { return model_; }
    LatticeModel& model() { return model_; }
    std::size_t skipped_updates() const { return skipped_; }

    /// Quantiles of the fitted exit-reward law at a boundary cell (zeros
    /// until an exit through it has been seen).
    QuantileDistribution terminal_quantiles(Cell cell) const;
    void record_terminal_reward(Cell cell, double reward);

    /// Target mixture for (cell, action) under the current model and table.
    /// Throws DegenerateModelError when the model is not yet informative.
    WeightedParticleSet target_mixture(Cell cell, int action, double reward_rate) const;

    /// Applies one transition. Returns false when the update was skipped
    /// because the dynamics model is still degenerate.
    bool update(const Transition& t);

private:
    AgentConfig cfg_;
    Lattice lattice_;
    LatticeModel model_;
    StatisticsTable table_;
    std::vector<TerminalRewardStats> terminal_;
    std::size_t skipped_ = 0;
};

/// Tabular quantile-regression TD learning on the lattice cells at the raw
/// observation rate.
class QtdAgent {
public:
    QtdAgent(AgentConfig cfg, Lattice lattice, int num_actions);

    const AgentConfig& config() const { return cfg_; }
    const Lattice& lattice() const { return lattice_; }
    const StatisticsTable& table() const { return table_; }
    StatisticsTable& table() { return table_; }

    void update(const Transition& t, Rng& rng);

private:
    AgentConfig cfg_;
    Lattice lattice_;
    StatisticsTable table_;
    std::vector<double> levels_;
};

/// Quantile-regression step for one particle: theta + lr (tau - 1{target < theta}).
double quantile_regression_step(double theta, double target, double tau, double lr);

}  // namespace qhjb
