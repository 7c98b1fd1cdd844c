#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "qhjb/harness.hpp"

using namespace qhjb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("qhjb_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::map<double, double> masses_by_cell(const HeatmapGrid& g) {
    std::map<double, double> m;
    for (const auto& r : g.rows) m[r.x_cell] += r.mass;
    return m;
}

}  // namespace

TEST_CASE("config parsing") {
    std::istringstream in(
        "# pilot\n"
        "algo = qtd\n"
        "gamma=0.5\n"
        "  seed = 7   # trailing comment\n"
        "\n"
        "decision = step\n"
        "proximal = transport_cost\n"
        "max_halvings = 3\n"
        "newton_after = -1\n");
    const auto cfg = ExperimentConfig::parse(in);
    CHECK(cfg.algo == "qtd");
    CHECK(cfg.gamma == 0.5);
    CHECK(cfg.seed == 7);
    CHECK(cfg.decision == "step");
    CHECK(cfg.proximal == "transport_cost");
    CHECK(cfg.max_halvings == 3);
    CHECK(cfg.newton_after == -1);
    CHECK(cfg.n_quantiles == 51);

    std::istringstream unknown("colour = red\n");
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse(unknown), doctest::Contains("colour"), std::invalid_argument);
    std::istringstream bad("gamma = lots\n");
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse(bad), doctest::Contains("gamma"), std::invalid_argument);
    std::istringstream neg("total_steps = -3\n");
    CHECK_THROWS_AS(ExperimentConfig::parse(neg), std::invalid_argument);
}

TEST_CASE("config validation names the offending key") {
    ExperimentConfig cfg;
    cfg.explore_eps = 2.0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.algo = "dqn";
    CHECK_THROWS_WITH(cfg.validate(), doctest::Contains("algo"));
    cfg = {};
    cfg.decision = "sometimes";
    CHECK_THROWS_WITH(cfg.validate(), doctest::Contains("decision"));
    cfg = {};
    cfg.proximal = "kl";
    CHECK_THROWS_WITH(cfg.validate(), doctest::Contains("proximal"));
}

TEST_CASE("config text round trip") {
    ExperimentConfig cfg;
    cfg.algo = "qtd";
    cfg.tau = 0.125;
    cfg.qtd_lr = 0.3;
    cfg.seed = 99;
    cfg.decision = "step";
    cfg.out_dir = "some/dir";
    std::istringstream in(cfg.to_string());
    const auto back = ExperimentConfig::parse(in);
    CHECK(back.to_string() == cfg.to_string());
    CHECK(back.tau == 0.125);
    CHECK(back.out_dir == "some/dir");
}

TEST_CASE("heatmap examples") {
    Lattice lat(0.5);
    StatisticsTable t(lat.num_cells(), 2, 51);
    t.set(1, 0, QuantileDistribution::constant(51, 1.3));
    std::vector<double> uniform;
    for (double tau : quantile_levels(51)) uniform.push_back(-3.0 + 10.0 * tau);
    t.set(2, 1, QuantileDistribution::make(uniform));
    const auto g = export_heatmap(t, lat, 10, -3.0, 7.0);
    REQUIRE(g.rows.size() == 30);

    // Cell 0 is untouched: all mass in the bin holding zero.
    for (std::size_t b = 0; b < 10; ++b) {
        const auto& r = g.rows[b];
        const bool holds_zero = r.return_bin_center - 0.5 <= 0.0 && 0.0 < r.return_bin_center + 0.5;
        CHECK(r.mass == doctest::Approx(holds_zero ? 1.0 : 0.0));
    }
    for (std::size_t b = 0; b < 10; ++b) {
        const auto& r = g.rows[10 + b];
        const bool holds = r.return_bin_center - 0.5 <= 1.3 && 1.3 < r.return_bin_center + 0.5;
        CHECK(r.mass == doctest::Approx(holds ? 1.0 : 0.0));
        CHECK(std::abs(g.rows[20 + b].mass - 0.1) <= 2.0 / 51);
    }
    for (const auto& [x, m] : masses_by_cell(g)) CHECK(std::abs(m - 1.0) <= 1e-6);
    CHECK_THROWS(export_heatmap(t, lat, 1, 0, 1));
}

TEST_CASE("zero-step run writes the initial tables") {
    ExperimentConfig cfg;
    cfg.total_steps = 0;
    cfg.out_dir = scratch("zero").string();
    const auto r = run(cfg);
    CHECK(r.episodes == 0);
    for (const char* f : {artifacts::kCheckpoint, artifacts::kModel, artifacts::kErrorProfile, artifacts::kHeatmap,
                          artifacts::kQuantileScan})
        CHECK(fs::exists(fs::path(cfg.out_dir) / f));
    const auto back = load_checkpoint(cfg, fs::path(cfg.out_dir) / artifacts::kCheckpoint);
    CHECK(back.at(25, 1) == QuantileDistribution::constant(51, 0.0));
    for (const auto& rec : r.profile.records) CHECK(rec.abs_err == doctest::Approx(rec.v_star));
}

TEST_CASE("identical seeds give byte-identical artifacts") {
    for (const char* algo : {"fdwgf", "qtd"}) {
        ExperimentConfig cfg;
        cfg.algo = algo;
        cfg.total_steps = 20000;
        cfg.seed = 4;
        cfg.out_dir = scratch(std::string(algo) + "_a").string();
        REQUIRE(run(cfg).episodes > 0);
        const std::string first = cfg.out_dir;
        cfg.out_dir = scratch(std::string(algo) + "_b").string();
        run(cfg);
        for (const char* f : {artifacts::kCheckpoint, artifacts::kErrorProfile, artifacts::kHeatmap, artifacts::kQuantileScan})
            CHECK(slurp(fs::path(first) / f) == slurp(fs::path(cfg.out_dir) / f));
        cfg.seed = 5;
        cfg.out_dir = scratch(std::string(algo) + "_c").string();
        run(cfg);
        CHECK(slurp(fs::path(first) / artifacts::kCheckpoint) != slurp(fs::path(cfg.out_dir) / artifacts::kCheckpoint));
    }
}

TEST_CASE("eval and export reproduce the run artifacts from a checkpoint") {
    ExperimentConfig cfg;
    cfg.total_steps = 2000;
    cfg.out_dir = scratch("trained").string();
    run(cfg);
    const fs::path ckpt = fs::path(cfg.out_dir) / artifacts::kCheckpoint;
    ExperimentConfig again = cfg;
    again.out_dir = scratch("replayed").string();
    evaluate_checkpoint(again, ckpt);
    export_checkpoint(again, ckpt);
    for (const char* f : {artifacts::kErrorProfile, artifacts::kHeatmap, artifacts::kQuantileScan})
        CHECK(slurp(fs::path(cfg.out_dir) / f) == slurp(fs::path(again.out_dir) / f));

    ExperimentConfig wrong = cfg;
    wrong.n_quantiles = 11;
    CHECK_THROWS(load_checkpoint(wrong, ckpt));
}

TEST_CASE("training counts episodes") {
    ExperimentConfig cfg;
    cfg.algo = "qtd";
    cfg.total_steps = 50000;
    const auto r = train(cfg);
    CHECK(r.episodes > 0);
    CHECK(r.profile.records.size() == 49);
}
