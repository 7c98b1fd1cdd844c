#include "qhjb/agents.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "csv.hpp"

namespace qhjb {

StatisticsTable::StatisticsTable(std::size_t num_cells, int num_actions, std::size_t n_quantiles, double init)
    : num_cells_(num_cells), num_actions_(num_actions), n_(n_quantiles) {
    if (num_actions < 1 || n_quantiles < 1) throw std::invalid_argument("invalid statistics table shape");
    entries_.assign(num_cells * num_actions, QuantileDistribution::constant(n_quantiles, init));
}

std::size_t StatisticsTable::index(Cell cell, int action) const {
    if (cell >= num_cells_ || action < 0 || action >= num_actions_)
        throw std::out_of_range("statistics table entry out of range");
    return cell * num_actions_ + action;
}

const QuantileDistribution& StatisticsTable::at(Cell cell, int action) const { return entries_[index(cell, action)]; }

void StatisticsTable::set(Cell cell, int action, QuantileDistribution q) {
    if (q.size() != n_) throw std::invalid_argument("quantile count does not match the table");
    entries_[index(cell, action)] = std::move(q);
}

int StatisticsTable::greedy_action(Cell cell) const {
    int best = 0;
    double best_mean = at(cell, 0).mean();
    for (int a = 1; a < num_actions_; ++a) {
        const double m = at(cell, a).mean();
        if (m > best_mean) {
            best = a;
            best_mean = m;
        }
    }
    return best;
}

void StatisticsTable::write_csv(std::ostream& out) const {
    const auto levels = quantile_levels(n_);
    out << "cell_index,action,k,tau_k,quantile_value\n";
    for (std::size_t c = 0; c < num_cells_; ++c)
        for (int a = 0; a < num_actions_; ++a) {
            const auto& q = at(c, a);
            for (std::size_t k = 0; k < n_; ++k)
                out << c << ',' << a << ',' << k + 1 << ',' << csv::format(levels[k]) << ',' << csv::format(q[k])
                    << '\n';
        }
}

StatisticsTable StatisticsTable::read_csv(std::istream& in, std::size_t num_cells, int num_actions) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("statistics checkpoint is empty");
    std::vector<std::vector<double>> values(num_cells * num_actions);
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != 5) throw std::runtime_error("statistics checkpoint row must have 5 columns");
        const auto cell = static_cast<std::size_t>(csv::parse_int(f[0]));
        const auto action = static_cast<int>(csv::parse_int(f[1]));
        const auto k = static_cast<std::size_t>(csv::parse_int(f[2]));
        if (cell >= num_cells || action < 0 || action >= num_actions || k == 0)
            throw std::runtime_error("statistics checkpoint row out of range: " + line);
        auto& v = values[cell * num_actions + action];
        if (v.size() < k) v.resize(k, 0.0);
        v[k - 1] = csv::parse_double(f[4]);
        n = std::max(n, k);
    }
    if (n == 0) throw std::runtime_error("statistics checkpoint has no rows");
    StatisticsTable table(num_cells, num_actions, n);
    for (std::size_t c = 0; c < num_cells; ++c)
        for (int a = 0; a < num_actions; ++a) {
            auto& v = values[c * num_actions + a];
            if (v.size() != n) throw std::runtime_error("statistics checkpoint is missing quantiles");
            table.set(c, a, QuantileDistribution::make(std::move(v)));
        }
    return table;
}

int select_action(const StatisticsTable& table, Cell cell, double explore_eps, Rng& rng) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < explore_eps) {
        std::uniform_int_distribution<int> pick(0, table.num_actions() - 1);
        return pick(rng);
    }
    return table.greedy_action(cell);
}

void AgentConfig::validate() const {
    if (!(epsilon_lattice > 0.0)) throw std::invalid_argument("epsilon_lattice must be positive");
    if (n_quantiles < 1) throw std::invalid_argument("n_quantiles must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
    if (!(explore_eps >= 0.0 && explore_eps <= 1.0)) throw std::invalid_argument("explore_eps must lie in [0, 1]");
    if (!(qtd_lr > 0.0)) throw std::invalid_argument("qtd_lr must be positive");
    jko().validate();
}

JkoConfig AgentConfig::jko() const {
    JkoConfig j;
    j.tau = tau;
    j.beta = beta;
    j.gd_steps = gd_steps;
    j.gd_rate = gd_rate;
    j.max_halvings = max_halvings;
    j.coupling = coupling;
    j.proximal = proximal;
    j.sinkhorn = sinkhorn;
    return j;
}

void TerminalRewardStats::add(double r) {
    ++count;
    const double d = r - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (r - mean);
}

FdwgfAgent::FdwgfAgent(AgentConfig cfg, Lattice lattice, int num_actions)
    : cfg_(cfg),
      lattice_(lattice),
      model_(lattice.num_cells(), num_actions, lattice.dim()),
      table_(lattice.num_cells(), num_actions, cfg.n_quantiles),
      terminal_(lattice.num_cells()) {
    cfg_.validate();
}

QuantileDistribution FdwgfAgent::terminal_quantiles(Cell cell) const {
    const auto& s = terminal_.at(cell);
    if (s.count == 0) return QuantileDistribution::constant(cfg_.n_quantiles, 0.0);
    return QuantileDistribution::gaussian(cfg_.n_quantiles, s.mean, std::sqrt(s.variance()));
}

void FdwgfAgent::record_terminal_reward(Cell cell, double reward) { terminal_.at(cell).add(reward); }

WeightedParticleSet FdwgfAgent::target_mixture(Cell cell, int action, double reward_rate) const {
    const TransitionKernel k = kernel(model_, lattice_, cell, action);
    std::vector<MixtureComponent> components;
    components.reserve(k.probs.size());
    for (const auto& [y, p] : k.probs) {
        if (p <= 0.0) continue;
        // Boundary cells are absorbing: bootstrap from the exit-reward fit.
        const QuantileDistribution base =
            lattice_.is_boundary(y) ? terminal_quantiles(y) : table_.at(y, table_.greedy_action(y));
        components.push_back({p, base.pushforward_affine(k.delta, reward_rate, cfg_.gamma)});
    }
    return mixture(components);
}

bool FdwgfAgent::update(const Transition& t) {
    const Cell xi = lattice_.encode(t.x.x);
    model_.update(xi, t.action, t, cfg_.alpha);
    // Exit rewards are impulses: they feed the absorbing cell's law and the
    // interior reward rate stays zero.
    if (t.terminal) record_terminal_reward(lattice_.encode(t.next.x), t.reward);
    const double reward_rate = t.terminal ? 0.0 : t.reward / t.delta;

    WeightedParticleSet target;
    try {
        target = target_mixture(xi, t.action, reward_rate);
    } catch (const DegenerateModelError&) {
        ++skipped_;
        return false;
    }
    const QuantileDistribution moved = jko_step(table_.at(xi, t.action), target, cfg_.jko());
    table_.set(xi, t.action, extract_quantiles(WeightedParticleSet::uniform(moved), cfg_.n_quantiles));
    return true;
}

double quantile_regression_step(double theta, double target, double tau, double lr) {
    return theta + lr * (tau - (target < theta ? 1.0 : 0.0));
}

QtdAgent::QtdAgent(AgentConfig cfg, Lattice lattice, int num_actions)
    : cfg_(cfg),
      lattice_(lattice),
      table_(lattice.num_cells(), num_actions, cfg.n_quantiles),
      levels_(quantile_levels(cfg.n_quantiles)) {
    cfg_.validate();
}

void QtdAgent::update(const Transition& t, Rng& rng) {
    const Cell xi = lattice_.encode(t.x.x);
    const double discount = std::pow(cfg_.gamma, t.delta);
    const std::size_t n = cfg_.n_quantiles;

    // Snapshot: the next cell is frequently the current one.
    QuantileDistribution next;
    if (!t.terminal) {
        const Cell next_cell = lattice_.encode(t.next.x);
        next = table_.at(next_cell, table_.greedy_action(next_cell));
    }
    const QuantileDistribution& current = table_.at(xi, t.action);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> theta(current.particles().begin(), current.particles().end());
    for (std::size_t k = 0; k < n; ++k) {
        const double g = t.terminal ? discount * t.reward : t.reward + discount * next[pick(rng)];
        theta[k] = quantile_regression_step(theta[k], g, levels_[k], cfg_.qtd_lr);
    }
    table_.set(xi, t.action, QuantileDistribution::make(std::move(theta)));
}

}  // namespace qhjb
