#include "qhjb/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "csv.hpp"

namespace qhjb {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double to_double(const std::string& key, const std::string& value) {
    try {
        return csv::parse_double(value);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': expected a number, got '" + value + "'");
    }
}

std::uint64_t to_count(const std::string& key, const std::string& value) {
    try {
        const long long v = csv::parse_int(value);
        if (v < 0) throw std::invalid_argument("negative");
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
    }
}

int to_int(const std::string& key, const std::string& value) {
    try {
        return static_cast<int>(csv::parse_int(value));
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + value + "'");
    }
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << contents;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

template <typename Writer>
void write_csv_file(const std::filesystem::path& path, Writer&& writer) {
    std::ostringstream buf;
    writer(buf);
    write_file(path, buf.str());
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return in;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (key == "algo") algo = value;
    else if (key == "gamma") gamma = to_double(key, value);
    else if (key == "obs_hz") obs_hz = to_double(key, value);
    else if (key == "epsilon_lattice") epsilon_lattice = to_double(key, value);
    else if (key == "n_quantiles") n_quantiles = to_count(key, value);
    else if (key == "tau") tau = to_double(key, value);
    else if (key == "beta") beta = to_double(key, value);
    else if (key == "alpha") alpha = to_double(key, value);
    else if (key == "explore_eps") explore_eps = to_double(key, value);
    else if (key == "qtd_lr") qtd_lr = to_double(key, value);
    else if (key == "total_steps") total_steps = to_count(key, value);
    else if (key == "seed") seed = to_count(key, value);
    else if (key == "out_dir") out_dir = value;
    else if (key == "gd_steps") gd_steps = static_cast<int>(to_count(key, value));
    else if (key == "gd_rate") gd_rate = to_double(key, value);
    else if (key == "max_halvings") max_halvings = static_cast<int>(to_count(key, value));
    else if (key == "coupling") coupling = value;
    else if (key == "proximal") proximal = value;
    else if (key == "decision") decision = value;
    else if (key == "sinkhorn_tol") sinkhorn_tol = to_double(key, value);
    else if (key == "newton_after") newton_after = to_int(key, value);
    else if (key == "heatmap_bins") heatmap_bins = to_count(key, value);
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse(in);
}

void ExperimentConfig::validate() const {
    if (algo != "fdwgf" && algo != "qtd")
        throw std::invalid_argument("config key 'algo': expected fdwgf or qtd, got '" + algo + "'");
    if (coupling != "comonotone" && coupling != "independent")
        throw std::invalid_argument("config key 'coupling': expected comonotone or independent, got '" + coupling + "'");
    if (decision != "cell" && decision != "step")
        throw std::invalid_argument("config key 'decision': expected cell or step, got '" + decision + "'");
    if (proximal != "entropic" && proximal != "transport_cost")
        throw std::invalid_argument("config key 'proximal': expected entropic or transport_cost, got '" + proximal + "'");
    if (!(obs_hz > 0.0)) throw std::invalid_argument("config key 'obs_hz' must be positive");
    if (!(tau > 0.0)) throw std::invalid_argument("config key 'tau' must be positive");
    if (!(beta > 0.0)) throw std::invalid_argument("config key 'beta' must be positive");
    if (!(sinkhorn_tol > 0.0)) throw std::invalid_argument("config key 'sinkhorn_tol' must be positive");
    if (heatmap_bins < 2) throw std::invalid_argument("config key 'heatmap_bins' must be at least 2");
    if (out_dir.empty()) throw std::invalid_argument("config key 'out_dir' must not be empty");
    env().validate();
    agent().validate();
    (void)lattice();
}

AgentConfig ExperimentConfig::agent() const {
    AgentConfig a;
    a.epsilon_lattice = epsilon_lattice;
    a.n_quantiles = n_quantiles;
    a.gamma = gamma;
    a.tau = tau;
    a.beta = beta;
    a.alpha = alpha;
    a.explore_eps = explore_eps;
    a.qtd_lr = qtd_lr;
    a.gd_steps = gd_steps;
    a.gd_rate = gd_rate;
    a.max_halvings = max_halvings;
    a.coupling = coupling == "independent" ? KineticCoupling::independent : KineticCoupling::comonotone;
    a.proximal = proximal == "transport_cost" ? ProximalValue::transport_cost : ProximalValue::entropic;
    a.sinkhorn.tol = sinkhorn_tol;
    a.sinkhorn.newton_after = newton_after;
    return a;
}

ToyEnvParams ExperimentConfig::env() const {
    ToyEnvParams p;
    p.gamma = gamma;
    p.obs_frequency = obs_hz;
    return p;
}

Lattice ExperimentConfig::lattice() const { return Lattice(epsilon_lattice, 1, 0.0, 1.0); }

std::string ExperimentConfig::to_string() const {
    std::ostringstream out;
    out << "algo = " << algo << '\n'
        << "gamma = " << csv::format(gamma) << '\n'
        << "obs_hz = " << csv::format(obs_hz) << '\n'
        << "epsilon_lattice = " << csv::format(epsilon_lattice) << '\n'
        << "n_quantiles = " << n_quantiles << '\n'
        << "tau = " << csv::format(tau) << '\n'
        << "beta = " << csv::format(beta) << '\n'
        << "alpha = " << csv::format(alpha) << '\n'
        << "explore_eps = " << csv::format(explore_eps) << '\n'
        << "decision = " << decision << '\n'
        << "qtd_lr = " << csv::format(qtd_lr) << '\n'
        << "total_steps = " << total_steps << '\n'
        << "seed = " << seed << '\n'
        << "out_dir = " << out_dir << '\n'
        << "gd_steps = " << gd_steps << '\n'
        << "gd_rate = " << csv::format(gd_rate) << '\n'
        << "max_halvings = " << max_halvings << '\n'
        << "coupling = " << coupling << '\n'
        << "proximal = " << proximal << '\n'
        << "sinkhorn_tol = " << csv::format(sinkhorn_tol) << '\n'
        << "newton_after = " << newton_after << '\n'
        << "heatmap_bins = " << heatmap_bins << '\n';
    return out.str();
}

void HeatmapGrid::write_csv(std::ostream& out) const {
    out << "x_cell,return_bin_center,mass\n";
    for (const auto& r : rows)
        out << csv::format(r.x_cell) << ',' << csv::format(r.return_bin_center) << ',' << csv::format(r.mass) << '\n';
}

HeatmapGrid export_heatmap(const StatisticsTable& table, const Lattice& lattice, std::size_t bins, double v_min,
                           double v_max) {
    if (bins < 2) throw std::invalid_argument("heatmap needs at least two bins");
    if (!(v_max > v_min)) throw std::invalid_argument("heatmap range must satisfy v_min < v_max");
    if (lattice.dim() != 1) throw std::invalid_argument("heatmap export needs a 1-D lattice");
    const double width = (v_max - v_min) / static_cast<double>(bins);
    HeatmapGrid grid;
    grid.rows.reserve(lattice.num_cells() * bins);
    std::vector<double> mass(bins);
    for (Cell c = 0; c < lattice.num_cells(); ++c) {
        std::fill(mass.begin(), mass.end(), 0.0);
        const auto& q = table.at(c, table.greedy_action(c));
        const double w = 1.0 / static_cast<double>(q.size());
        for (double z : q.particles()) {
            const double pos = std::floor((z - v_min) / width);
            const auto b = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
            mass[b] += w;
        }
        const double x = lattice.point(c)[0];
        for (std::size_t b = 0; b < bins; ++b)
            grid.rows.push_back({x, v_min + (static_cast<double>(b) + 0.5) * width, mass[b]});
    }
    return grid;
}

void write_quantile_scan(const StatisticsTable& table, const Lattice& lattice, std::ostream& out) {
    const auto levels = quantile_levels(table.n_quantiles());
    out << "x_cell,action,k,tau_k,value\n";
    for (Cell c = 0; c < lattice.num_cells(); ++c) {
        const std::string x = csv::format(lattice.point(c)[0]);
        for (int a = 0; a < table.num_actions(); ++a) {
            const auto& q = table.at(c, a);
            for (std::size_t k = 0; k < q.size(); ++k)
                out << x << ',' << a << ',' << k + 1 << ',' << csv::format(levels[k]) << ',' << csv::format(q[k])
                    << '\n';
        }
    }
}

namespace {

double draw_reset(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double x = 0.0;
    do x = u(rng);
    while (x <= 0.0 || x >= 1.0);
    return x;
}

Rng stream(std::uint64_t seed, std::uint32_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
    return Rng(seq);
}

}  // namespace

TrainResult train(const ExperimentConfig& config) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const ToyEnv env(config.env());
    const Lattice lattice = config.lattice();
    const AgentConfig agent_cfg = config.agent();
    const double delta = env.params().step_duration();

    Rng env_rng = stream(config.seed, 1);
    Rng agent_rng = stream(config.seed, 2);

    std::optional<FdwgfAgent> fdwgf;
    std::optional<QtdAgent> qtd;
    if (config.algo == "fdwgf")
        fdwgf.emplace(agent_cfg, lattice, ToyEnv::kNumActions);
    else
        qtd.emplace(agent_cfg, lattice, ToyEnv::kNumActions);
    auto table = [&]() -> const StatisticsTable& { return fdwgf ? fdwgf->table() : qtd->table(); };

    TrainResult result{table(), std::nullopt, {}, 0, 0, 0.0};
    const bool per_step = config.decision == "step";
    EnvState state{{draw_reset(env_rng)}, false};
    std::optional<Cell> decided_at;
    int action = 0;
    for (std::uint64_t step = 0; step < config.total_steps; ++step) {
        const Cell cell = lattice.encode(state.x);
        if (per_step || decided_at != cell) {
            action = select_action(table(), cell, agent_cfg.explore_eps, agent_rng);
            decided_at = cell;
        }
        const Transition t = env.simulate_step(state, action, delta, env_rng);
        if (fdwgf)
            fdwgf->update(t);
        else
            qtd->update(t, agent_rng);
        if (t.terminal) {
            ++result.episodes;
            state = EnvState{{draw_reset(env_rng)}, false};
            decided_at.reset();
        } else {
            state = t.next;
        }
    }

    result.table = table();
    if (fdwgf) {
        result.model = fdwgf->model();
        result.skipped_updates = fdwgf->skipped_updates();
    }
    result.profile = value_error_profile(result.table, lattice, env.params());
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

TrainResult run(const ExperimentConfig& config) {
    TrainResult result = train(config);
    const std::filesystem::path dir(config.out_dir);
    std::filesystem::create_directories(dir);
    const Lattice lattice = config.lattice();
    const ToyEnv env(config.env());

    write_csv_file(dir / artifacts::kCheckpoint, [&](std::ostream& o) { result.table.write_csv(o); });
    if (result.model) write_csv_file(dir / artifacts::kModel, [&](std::ostream& o) { result.model->write_csv(o); });
    write_csv_file(dir / artifacts::kErrorProfile, [&](std::ostream& o) { result.profile.write_csv(o); });
    write_csv_file(dir / artifacts::kHeatmap, [&](std::ostream& o) {
        export_heatmap(result.table, lattice, config.heatmap_bins, env.v_min(), env.v_max()).write_csv(o);
    });
    write_csv_file(dir / artifacts::kQuantileScan, [&](std::ostream& o) { write_quantile_scan(result.table, lattice, o); });
    return result;
}

StatisticsTable load_checkpoint(const ExperimentConfig& config, const std::filesystem::path& checkpoint) {
    auto in = open_input(checkpoint);
    StatisticsTable table = StatisticsTable::read_csv(in, config.lattice().num_cells(), ToyEnv::kNumActions);
    if (table.n_quantiles() != config.n_quantiles)
        throw std::invalid_argument("checkpoint quantile count does not match config key 'n_quantiles'");
    return table;
}

ErrorProfile evaluate_checkpoint(const ExperimentConfig& config, const std::filesystem::path& checkpoint) {
    config.validate();
    const StatisticsTable table = load_checkpoint(config, checkpoint);
    ErrorProfile profile = value_error_profile(table, config.lattice(), config.env());
    std::filesystem::create_directories(config.out_dir);
    write_csv_file(std::filesystem::path(config.out_dir) / artifacts::kErrorProfile,
                   [&](std::ostream& o) { profile.write_csv(o); });
    return profile;
}

void export_checkpoint(const ExperimentConfig& config, const std::filesystem::path& checkpoint) {
    config.validate();
    const StatisticsTable table = load_checkpoint(config, checkpoint);
    const Lattice lattice = config.lattice();
    const ToyEnv env(config.env());
    const std::filesystem::path dir(config.out_dir);
    std::filesystem::create_directories(dir);
    write_csv_file(dir / artifacts::kHeatmap, [&](std::ostream& o) {
        export_heatmap(table, lattice, config.heatmap_bins, env.v_min(), env.v_max()).write_csv(o);
    });
    write_csv_file(dir / artifacts::kQuantileScan, [&](std::ostream& o) { write_quantile_scan(table, lattice, o); });
}

}  // namespace qhjb
