#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "qhjb/diagnostics.hpp"
#include "qhjb/env.hpp"
#include "qhjb/harness.hpp"
#include "qhjb/jko.hpp"
#include "qhjb/lattice.hpp"
#include "qhjb/sinkhorn.hpp"

namespace py = pybind11;
using namespace qhjb;

namespace {

using Weights = std::optional<std::vector<double>>;

TransportProblem make_problem(std::vector<double> source, std::vector<double> target, double beta,
                              const Weights& source_weights, const Weights& target_weights) {
    TransportProblem p = TransportProblem::uniform(source, target, beta);
    if (source_weights) p.source_weights = *source_weights;
    if (target_weights) p.target_weights = *target_weights;
    return p;
}

SinkhornOptions make_options(double tol, int max_iter) {
    SinkhornOptions o;
    o.tol = tol;
    o.max_iter = max_iter;
    return o;
}

py::array_t<double> to_array(std::span<const double> v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::dict profile_dict(const ErrorProfile& profile) {
    std::vector<double> x, v_hat, v_star, abs_err, w1_err;
    for (const auto& r : profile.records) {
        x.push_back(r.x);
        v_hat.push_back(r.v_hat);
        v_star.push_back(r.v_star);
        abs_err.push_back(r.abs_err);
        w1_err.push_back(r.w1_err);
    }
    py::dict d;
    d["x"] = to_array(x);
    d["v_hat"] = to_array(v_hat);
    d["v_star"] = to_array(v_star);
    d["abs_err"] = to_array(abs_err);
    d["w1_err"] = to_array(w1_err);
    d["mean_abs_error"] = profile.mean_abs_error();
    d["max_abs_error"] = profile.max_abs_error();
    d["mean_w1_error"] = profile.mean_w1_error();
    return d;
}

py::dict result_dict(const TrainResult& r) {
    py::dict d;
    d["profile"] = profile_dict(r.profile);
    d["episodes"] = r.episodes;
    d["skipped_updates"] = r.skipped_updates;
    d["seconds"] = r.seconds;
    return d;
}

KineticCoupling parse_coupling(const std::string& s) {
    if (s == "independent") return KineticCoupling::independent;
    if (s == "comonotone") return KineticCoupling::comonotone;
    throw std::invalid_argument("coupling must be 'independent' or 'comonotone', got '" + s + "'");
}

ProximalValue parse_proximal(const std::string& s) {
    if (s == "transport_cost") return ProximalValue::transport_cost;
    if (s == "entropic") return ProximalValue::entropic;
    throw std::invalid_argument("proximal must be 'transport_cost' or 'entropic', got '" + s + "'");
}

JkoConfig make_jko(double tau, double beta, int gd_steps, double gd_rate, int max_halvings, const std::string& coupling,
                   const std::string& proximal) {
    JkoConfig cfg;
    cfg.tau = tau;
    cfg.beta = beta;
    cfg.gd_steps = gd_steps;
    cfg.gd_rate = gd_rate;
    cfg.max_halvings = max_halvings;
    cfg.coupling = parse_coupling(coupling);
    cfg.proximal = parse_proximal(proximal);
    return cfg;
}

WeightedParticleSet make_target(const std::vector<double>& locations, const Weights& weights) {
    std::vector<WeightedParticle> e(locations.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        e[i].location = locations[i];
        e[i].weight = weights ? weights->at(i) : 1.0 / static_cast<double>(e.size());
    }
    if (weights && weights->size() != locations.size())
        throw std::invalid_argument("target weights and locations differ in length");
    return WeightedParticleSet(std::move(e));
}

}  // namespace

PYBIND11_MODULE(_qhjb, m) {
    m.doc() = "Continuous-time distributional RL on a finite-difference lattice";

    m.def("quantile_levels", [](std::size_t n) { return to_array(quantile_levels(n)); }, py::arg("n"));

    m.def("analytic_value", [](double x, double gamma) { return analytic_value(x, gamma); }, py::arg("x"),
          py::arg("gamma") = 0.3);
    m.def("analytic_kink", [](double gamma) { return analytic_kink(gamma); }, py::arg("gamma") = 0.3);
    m.def(
        "analytic_return_distribution",
        [](double x, double gamma) {
            const ReturnLaw law = analytic_return_distribution(x, gamma, analytic_greedy_direction(x, gamma));
            return py::make_tuple(law.mean, law.stddev);
        },
        py::arg("x"), py::arg("gamma") = 0.3, "(mean, stddev) of the optimal return from x.");

    m.def(
        "fd_stencil",
        [](std::vector<double> mu, std::vector<double> sigma, double epsilon) {
            const Stencil s = fd_stencil(mu, sigma, epsilon);
            py::list probs;
            for (const auto& p : s.probs) probs.append(py::make_tuple(p.offset, p.probability));
            return py::make_tuple(s.delta, probs);
        },
        py::arg("mu"), py::arg("sigma"), py::arg("epsilon"),
        "(delta, [(offset, probability), ...]) for drift mu and row-major covariance rate sigma.");

    m.def(
        "sinkhorn_solve",
        [](std::vector<double> source, std::vector<double> target, double beta, const Weights& source_weights,
           const Weights& target_weights, double tol, int max_iter) {
            const auto p = make_problem(std::move(source), std::move(target), beta, source_weights, target_weights);
            const TransportPlan plan = solve(p, make_options(tol, max_iter));
            py::array_t<double> matrix({plan.rows, plan.cols});
            std::copy(plan.plan.begin(), plan.plan.end(), matrix.mutable_data());
            py::dict d;
            d["plan"] = matrix;
            d["u"] = to_array(plan.u);
            d["v"] = to_array(plan.v);
            d["iterations"] = plan.iterations;
            d["converged"] = plan.converged;
            d["marginal_error"] = plan.marginal_error;
            d["transport_cost"] = transport_cost(p, plan);
            d["entropic_cost"] = entropic_cost(p, plan);
            return d;
        },
        py::arg("source"), py::arg("target"), py::arg("beta") = 1000.0, py::arg("source_weights") = py::none(),
        py::arg("target_weights") = py::none(), py::arg("tol") = 1e-8, py::arg("max_iter") = 10000);
    m.def(
        "sinkhorn_value",
        [](std::vector<double> source, std::vector<double> target, double beta, const Weights& source_weights,
           const Weights& target_weights, double tol, int max_iter) {
            const auto r = value(make_problem(std::move(source), std::move(target), beta, source_weights, target_weights),
                                 make_options(tol, max_iter));
            if (!r.converged) throw std::runtime_error("Sinkhorn did not converge");
            return r.value;
        },
        py::arg("source"), py::arg("target"), py::arg("beta") = 1000.0, py::arg("source_weights") = py::none(),
        py::arg("target_weights") = py::none(), py::arg("tol") = 1e-8, py::arg("max_iter") = 10000);
    m.def(
        "grad_source",
        [](std::vector<double> source, std::vector<double> target, double beta, const Weights& source_weights,
           const Weights& target_weights, double tol, int max_iter) {
            const auto r = grad_source(
                make_problem(std::move(source), std::move(target), beta, source_weights, target_weights),
                make_options(tol, max_iter));
            if (!r.converged) throw std::runtime_error("Sinkhorn did not converge");
            return to_array(r.gradient);
        },
        py::arg("source"), py::arg("target"), py::arg("beta") = 1000.0, py::arg("source_weights") = py::none(),
        py::arg("target_weights") = py::none(), py::arg("tol") = 1e-8, py::arg("max_iter") = 10000);
    m.def(
        "exact_w2_squared",
        [](std::vector<double> a, std::vector<double> b) { return exact_w2_squared_uniform(a, b); }, py::arg("a"),
        py::arg("b"));

    m.def(
        "jko_step",
        [](std::vector<double> anchor, std::vector<double> target, const Weights& target_weights, double tau,
           double beta, int gd_steps, double gd_rate, int max_halvings, const std::string& coupling,
           const std::string& proximal) {
            const auto out = jko_step(QuantileDistribution::make(std::move(anchor)), make_target(target, target_weights),
                                      make_jko(tau, beta, gd_steps, gd_rate, max_halvings, coupling, proximal));
            return to_array(out.particles());
        },
        py::arg("anchor"), py::arg("target"), py::arg("target_weights") = py::none(), py::arg("tau") = 0.05,
        py::arg("beta") = 1000.0, py::arg("gd_steps") = 50, py::arg("gd_rate") = 1.2, py::arg("max_halvings") = 40,
        py::arg("coupling") = "independent", py::arg("proximal") = "transport_cost");
    m.def(
        "jko_objective",
        [](std::vector<double> candidate, std::vector<double> target, std::vector<double> anchor,
           const Weights& target_weights, double tau, double beta, const std::string& coupling,
           const std::string& proximal) {
            return objective(QuantileDistribution::make(std::move(candidate)), make_target(target, target_weights),
                             QuantileDistribution::make(std::move(anchor)),
                             make_jko(tau, beta, 50, 1.2, 40, coupling, proximal));
        },
        py::arg("candidate"), py::arg("target"), py::arg("anchor"), py::arg("target_weights") = py::none(),
        py::arg("tau") = 0.05, py::arg("beta") = 1000.0, py::arg("coupling") = "independent",
        py::arg("proximal") = "transport_cost");

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def("set", &ExperimentConfig::set, py::arg("key"), py::arg("value"))
        .def("validate", &ExperimentConfig::validate)
        .def("to_string", &ExperimentConfig::to_string)
        .def_static("from_file", &ExperimentConfig::from_file, py::arg("path"))
        .def_readonly("algo", &ExperimentConfig::algo)
        .def_readonly("seed", &ExperimentConfig::seed)
        .def_readonly("total_steps", &ExperimentConfig::total_steps)
        .def_readonly("out_dir", &ExperimentConfig::out_dir)
        .def("__repr__", &ExperimentConfig::to_string);

    m.def(
        "train",
        [](const ExperimentConfig& c) {
            std::optional<TrainResult> r;
            {
                py::gil_scoped_release release;
                r.emplace(train(c));
            }
            return result_dict(*r);
        },
        py::arg("config"));
    m.def(
        "run",
        [](const ExperimentConfig& c) {
            std::optional<TrainResult> r;
            {
                py::gil_scoped_release release;
                r.emplace(run(c));
            }
            return result_dict(*r);
        },
        py::arg("config"));
    m.def(
        "evaluate_checkpoint",
        [](const ExperimentConfig& c, const std::filesystem::path& p) { return profile_dict(evaluate_checkpoint(c, p)); },
        py::arg("config"), py::arg("checkpoint"));
    m.def("export_checkpoint", &export_checkpoint, py::arg("config"), py::arg("checkpoint"));
}
