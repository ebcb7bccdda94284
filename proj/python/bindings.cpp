#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "retire/csv.hpp"
#include "retire/error.hpp"
#include "retire/experiment.hpp"

namespace py = pybind11;
using namespace retire;

namespace {

py::dict boundary_dict(const FreeBoundary& fb) {
    py::dict d;
    d["t"] = fb.t;
    d["b"] = fb.b;
    d["upper"] = fb.upper;
    d["terminal"] = fb.terminal;
    d["terminal_target"] = fb.terminal_target;
    d["dy"] = fb.dy;
    return d;
}

py::dict moments_dict(const MomentStats& m) {
    py::dict d;
    d["mean"] = m.mean;
    d["std"] = m.std;
    d["se"] = m.se;
    d["n"] = m.n;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Lifecycle consumption, investment and retirement solver";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

    py::class_<ValueTriple>(m, "ValueTriple")
        .def_readonly("value", &ValueTriple::value)
        .def_readonly("dy", &ValueTriple::dy)
        .def_readonly("dyy", &ValueTriple::dyy)
        .def("__repr__", [](const ValueTriple& v) {
            return "ValueTriple(value=" + format_number(v.value) + ", dy=" + format_number(v.dy) +
                   ", dyy=" + format_number(v.dyy) + ")";
        });

    py::class_<EnvelopeData>(m, "EnvelopeData")
        .def_readonly("k_minus", &EnvelopeData::k_minus)
        .def_readonly("k_plus", &EnvelopeData::k_plus)
        .def_readonly("y_bar", &EnvelopeData::y_bar)
        .def_readonly("k0", &EnvelopeData::k0)
        .def_readonly("degenerate", &EnvelopeData::degenerate);

    py::class_<ConsumptionSplit>(m, "ConsumptionSplit")
        .def_readonly("c", &ConsumptionSplit::c)
        .def_readonly("g", &ConsumptionSplit::g)
        .def_property_readonly("total", &ConsumptionSplit::total);

    py::class_<UtilitySpec>(m, "UtilitySpec")
        .def_static("power_pair", &UtilitySpec::power_pair, py::arg("alpha"), py::arg("beta"), py::arg("a"))
        .def_static("apy", &UtilitySpec::apy, py::arg("phi"), py::arg("psi"), py::arg("c0"), py::arg("b0"))
        .def_static("tabulated", &UtilitySpec::tabulated, py::arg("k"), py::arg("value"))
        .def_property_readonly("envelope", &UtilitySpec::envelope)
        .def("describe", &UtilitySpec::describe);

    m.def("total_utility", &total_utility, py::arg("k"), py::arg("spec"));
    m.def("dual_h", &dual_h, py::arg("y"), py::arg("spec"));
    m.def("dual_h_neg_derivative", &dual_h_neg_derivative, py::arg("y"), py::arg("spec"));
    m.def("split_from_dual", &split_from_dual, py::arg("y"), py::arg("spec"));
    m.def("envelope_breakpoints", &envelope_breakpoints, py::arg("spec"));

    py::class_<MarketEnvironment>(m, "MarketEnvironment")
        .def_static("scalar", &MarketEnvironment::scalar, py::arg("r"), py::arg("rho"), py::arg("mu"),
                    py::arg("sigma"), py::arg("T"), py::arg("T_bar"))
        .def_readonly("T", &MarketEnvironment::T)
        .def_readonly("T_bar", &MarketEnvironment::T_bar)
        .def_property_readonly("theta_norm2", &MarketEnvironment::theta_norm2);

    py::class_<IncomeLaborSpec>(m, "IncomeLaborSpec")
        .def("income", &IncomeLaborSpec::income, py::arg("t"))
        .def("labor", &IncomeLaborSpec::labor, py::arg("t"))
        .def_readonly("a0", &IncomeLaborSpec::a0)
        .def_readonly("a1", &IncomeLaborSpec::a1)
        .def_readonly("a2", &IncomeLaborSpec::a2);

    m.def(
        "income_labor",
        [](double C, double K_prime, double K, double ell, double T, double rho) {
            return build_income_labor(C, K_prime, K, ell, T, Schedule::constant(rho));
        },
        py::arg("C"), py::arg("K_prime"), py::arg("K"), py::arg("ell"), py::arg("T"), py::arg("rho"));

    m.def(
        "hatV",
        [](double t, double y, const MarketEnvironment& env, const UtilitySpec& spec) {
            return hatV_quadrature(t, y, env, spec);
        },
        py::arg("t"), py::arg("y"), py::arg("env"), py::arg("spec"));

    m.def(
        "solve_boundary",
        [](const MarketEnvironment& env, const IncomeLaborSpec& inc, std::size_t n_t, std::size_t n_y, double y_max) {
            StoppingGridConfig cfg;
            cfg.n_t = n_t;
            cfg.n_y = n_y;
            cfg.y_max = y_max;
            StoppingSurface s;
            {
                py::gil_scoped_release release;
                s = solve_vi_fdm(env, inc, cfg);
            }
            return boundary_dict(extract_boundary(s, inc));
        },
        py::arg("env"), py::arg("inc"), py::arg("n_t") = 6000, py::arg("n_y") = 300, py::arg("y_max") = 10.0);

    py::class_<ExperimentConfig>(m, "Config")
        .def(py::init<>())
        .def_static(
            "parse", [](const std::string& text) { return parse_config(text); }, py::arg("text"))
        .def_static(
            "load", [](const std::filesystem::path& p) { return load_config(p); }, py::arg("path"))
        .def("set", &set_config_value, py::arg("key"), py::arg("value"))
        .def("entries", &config_entries)
        .def_readwrite("threads", &ExperimentConfig::threads)
        .def_readwrite("out_dir", &ExperimentConfig::out_dir);

    m.def(
        "run",
        [](const std::string& command, const ExperimentConfig& cfg) {
            CommandResult res;
            {
                py::gil_scoped_release release;
                if (command == "solve-post")
                    res = run_solve_post(cfg);
                else if (command == "solve-boundary")
                    res = run_solve_boundary(cfg);
                else if (command == "simulate")
                    res = run_simulate(cfg);
                else if (command == "figure-data")
                    res = run_figure_data(cfg);
                else if (command == "oracle-check")
                    res = run_oracle_check(cfg);
                else if (command == "validate")
                    res = run_validate(cfg);
                else if (command.size() == 6 && command.rfind("table", 0) == 0 && command[5] >= '1' && command[5] <= '4')
                    res = run_table(cfg, command[5] - '0');
                else
                    throw ValidationError("unknown command '" + command + "'");
            }
            return py::make_tuple(res.exit_code, res.summary, res.artifacts);
        },
        py::arg("command"), py::arg("config"),
        "Runs one CLI subcommand; returns (exit_code, summary, artifact paths).");

    m.def(
        "simulate_summary",
        [](const ExperimentConfig& cfg) {
            StatsSummary s;
            double y_star = 0.0, b0 = 0.0;
            {
                py::gil_scoped_release release;
                const MarketEnvironment env = market_from(cfg);
                const LifecycleModel model = solve_lifecycle_model(env, income_from(cfg, env), utility_from(cfg),
                                                                   post_grid_from(cfg), stopping_grid_from(cfg));
                SimulationConfig sc = simulation_from(cfg);
                sc.n_record = 0;
                const SimulationResult sim = simulate_lifecycle(model, sc);
                s = summarize(sim);
                y_star = sim.y_star;
                b0 = sim.b0;
            }
            py::dict d;
            d["y_star"] = y_star;
            d["b0"] = b0;
            d["tau"] = moments_dict(s.tau_all);
            d["tau_positive"] = moments_dict(s.tau_positive);
            d["immediate_fraction"] = s.immediate_fraction;
            d["X_tau"] = moments_dict(s.X_tau);
            return d;
        },
        py::arg("config"));
}
