#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qhjb/agents.hpp"
#include "qhjb/diagnostics.hpp"
#include "qhjb/env.hpp"
#include "qhjb/lattice.hpp"

namespace qhjb {

/// Every run parameter. Config files are flat UTF-8 `key = value` lines with
/// the field names below as keys; `#` starts a comment.
struct ExperimentConfig {
    std::string algo = "fdwgf";  // fdwgf | qtd
    double gamma = 0.3;
    double obs_hz = 1000.0;
    double epsilon_lattice = 0.02;
    std::size_t n_quantiles = 51;
    double tau = 0.25;
    double beta = 1000.0;
    double alpha = 0.1;
    double explore_eps = 1.0;
    /// When the behaviour action is drawn: every observation ("step"), or on
    /// reset and whenever the encoded cell changes ("cell").
    std::string decision = "cell";  // cell | step
    double qtd_lr = 0.1;
    std::uint64_t total_steps = 200000;
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    // Solver and export knobs.
    int gd_steps = 2;
    double gd_rate = 0.3;
    int max_halvings = 2;
    std::string coupling = "comonotone";  // comonotone | independent
    std::string proximal = "entropic";    // entropic | transport_cost
    double sinkhorn_tol = 1e-6;
    int newton_after = 5;
    std::size_t heatmap_bins = 64;

    /// Sets one field from its textual value. Unknown keys and malformed
    /// values throw std::invalid_argument naming the key.
    void set(const std::string& key, const std::string& value);
    static ExperimentConfig parse(std::istream& in);
    static ExperimentConfig from_file(const std::filesystem::path& path);

    void validate() const;
    AgentConfig agent() const;
    ToyEnvParams env() const;
    Lattice lattice() const;

    /// Flat key = value rendering accepted by parse().
    std::string to_string() const;
};

struct HeatmapRow {
    double x_cell = 0.0;
    double return_bin_center = 0.0;
    double mass = 0.0;
};

struct HeatmapGrid {
    std::vector<HeatmapRow> rows;

    /// Columns x_cell, return_bin_center, mass.
    void write_csv(std::ostream& out) const;
};

/// Histogram of the greedy action's particles per cell over `bins` equal bins
/// spanning [v_min, v_max]; particles outside land in the edge bins.
HeatmapGrid export_heatmap(const StatisticsTable& table, const Lattice& lattice, std::size_t bins, double v_min,
                           double v_max);

/// Columns x_cell, action, k, tau_k, value.
void write_quantile_scan(const StatisticsTable& table, const Lattice& lattice, std::ostream& out);

struct TrainResult {
    StatisticsTable table;
    std::optional<LatticeModel> model;  // FD-WGF only
    ErrorProfile profile;
    std::uint64_t episodes = 0;
    std::size_t skipped_updates = 0;
    double seconds = 0.0;
};

/// Runs the environment loop with per-step agent updates; deterministic given
/// the config.
TrainResult train(const ExperimentConfig& config);

/// train() plus every artifact written under config.out_dir.
TrainResult run(const ExperimentConfig& config);

/// File names inside out_dir.
namespace artifacts {
inline constexpr const char* kCheckpoint = "checkpoint.csv";
inline constexpr const char* kModel = "model.csv";
inline constexpr const char* kErrorProfile = "error_profile.csv";
inline constexpr const char* kHeatmap = "heatmap.csv";
inline constexpr const char* kQuantileScan = "quantile_scan.csv";
}  // namespace artifacts

StatisticsTable load_checkpoint(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

/// Recomputes the error profile of a checkpoint and writes it to out_dir.
ErrorProfile evaluate_checkpoint(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

/// Writes heatmap and quantile-scan CSVs of a checkpoint to out_dir.
void export_checkpoint(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

}  // namespace qhjb
