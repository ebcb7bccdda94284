#include "retire/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "retire/csv.hpp"
#include "retire/error.hpp"
#include "retire/numerics.hpp"

namespace retire {

namespace {

constexpr const char* kVersion = "retire 0.1.0";

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ValidationError("config key " + key + ": expected a number, got '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ValidationError("config key " + key + ": expected a nonnegative integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config key " + key + ": expected true or false, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
    if (out.empty()) throw ValidationError("config key " + key + ": empty list");
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_number(v[i]);
    return s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> m;
        auto num = [&m](const char* key, double ExperimentConfig::*field) {
            m[key] = [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.*field = parse_double(k, v);
            };
        };
        auto count = [&m](const char* key, std::size_t ExperimentConfig::*field) {
            m[key] = [field](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.*field = static_cast<std::size_t>(parse_uint(k, v));
            };
        };
        num("market.sigma", &ExperimentConfig::sigma);
        num("market.mu", &ExperimentConfig::mu);
        m["market.drift"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            if (v == "none")
                c.drift.reset();
            else
                c.drift = parse_double(k, v);
        };
        num("market.r", &ExperimentConfig::r);
        num("market.rho", &ExperimentConfig::rho);
        num("horizon.T", &ExperimentConfig::T);
        num("horizon.T_bar", &ExperimentConfig::T_bar);
        m["utility.kind"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
            if (v != "power_pair" && v != "apy")
                throw ValidationError("config key utility.kind: expected power_pair or apy, got '" + v + "'");
            c.utility = v;
        };
        num("utility.alpha", &ExperimentConfig::alpha);
        num("utility.beta", &ExperimentConfig::beta);
        num("utility.a", &ExperimentConfig::a);
        num("utility.phi", &ExperimentConfig::phi);
        num("utility.psi", &ExperimentConfig::psi);
        num("utility.c0", &ExperimentConfig::c0);
        num("utility.b0", &ExperimentConfig::b0);
        num("income.C", &ExperimentConfig::C);
        num("income.K_prime", &ExperimentConfig::K_prime);
        num("income.K", &ExperimentConfig::K);
        num("income.ell", &ExperimentConfig::ell);
        count("solver.n_t", &ExperimentConfig::n_t);
        count("solver.n_y", &ExperimentConfig::n_y);
        num("solver.y_max", &ExperimentConfig::y_max);
        m["solver.scheme"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
            if (v != "explicit" && v != "implicit")
                throw ValidationError("config key solver.scheme: expected explicit or implicit, got '" + v + "'");
            c.scheme = v;
        };
        m["solver.strict_cfl"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.strict_cfl = parse_bool(k, v);
        };
        count("solver.post_n_t", &ExperimentConfig::post_n_t);
        count("solver.post_n_y", &ExperimentConfig::post_n_y);
        num("solver.post_y_max", &ExperimentConfig::post_y_max);
        count("solver.mc_samples", &ExperimentConfig::mc_samples);
        count("solver.tree_steps", &ExperimentConfig::tree_steps);
        num("simulation.x0", &ExperimentConfig::x0);
        count("simulation.n_paths", &ExperimentConfig::n_paths);
        m["simulation.seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.seed = parse_uint(k, v);
        };
        count("simulation.n_steps", &ExperimentConfig::n_steps);
        m["simulation.observation_times"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.observation_times = parse_list(k, v);
        };
        count("simulation.n_record", &ExperimentConfig::n_record);
        m["output.dir"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; };
        count("output.surface_stride", &ExperimentConfig::surface_stride);
        return m;
    }();
    return table;
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const auto& s = setters();
    const auto it = s.find(key);
    if (it == s.end()) throw ValidationError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
    std::stringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(n) + ": expected 'key = value'");
        set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& c) {
    auto f = format_number;
    auto u = [](std::uint64_t v) { return std::to_string(v); };
    return {
        {"market.sigma", f(c.sigma)},
        {"market.mu", f(c.mu)},
        {"market.drift", c.drift ? f(*c.drift) : "none"},
        {"market.r", f(c.r)},
        {"market.rho", f(c.rho)},
        {"horizon.T", f(c.T)},
        {"horizon.T_bar", f(c.T_bar)},
        {"utility.kind", c.utility},
        {"utility.alpha", f(c.alpha)},
        {"utility.beta", f(c.beta)},
        {"utility.a", f(c.a)},
        {"utility.phi", f(c.phi)},
        {"utility.psi", f(c.psi)},
        {"utility.c0", f(c.c0)},
        {"utility.b0", f(c.b0)},
        {"income.C", f(c.C)},
        {"income.K_prime", f(c.K_prime)},
        {"income.K", f(c.K)},
        {"income.ell", f(c.ell)},
        {"solver.n_t", u(c.n_t)},
        {"solver.n_y", u(c.n_y)},
        {"solver.y_max", f(c.y_max)},
        {"solver.scheme", c.scheme},
        {"solver.strict_cfl", c.strict_cfl ? "true" : "false"},
        {"solver.post_n_t", u(c.post_n_t)},
        {"solver.post_n_y", u(c.post_n_y)},
        {"solver.post_y_max", f(c.post_y_max)},
        {"solver.mc_samples", u(c.mc_samples)},
        {"solver.tree_steps", u(c.tree_steps)},
        {"simulation.x0", f(c.x0)},
        {"simulation.n_paths", u(c.n_paths)},
        {"simulation.seed", u(c.seed)},
        {"simulation.n_steps", u(c.n_steps)},
        {"simulation.observation_times", join(c.observation_times)},
        {"simulation.n_record", u(c.n_record)},
        {"output.dir", c.out_dir},
        {"output.surface_stride", u(c.surface_stride)},
    };
}

MarketEnvironment market_from(const ExperimentConfig& c) {
    const double excess = c.drift ? *c.drift - c.r : c.mu;
    return MarketEnvironment::scalar(c.r, c.rho, excess, c.sigma, c.T, c.T_bar);
}

IncomeLaborSpec income_from(const ExperimentConfig& c, const MarketEnvironment& env) {
    return build_income_labor(c.C, c.K_prime, c.K, c.ell, c.T, env.rho);
}

UtilitySpec utility_from(const ExperimentConfig& c) {
    if (c.utility == "apy") return UtilitySpec::apy(c.phi, c.psi, c.c0, c.b0);
    return UtilitySpec::power_pair(c.alpha, c.beta, c.a);
}

PostGridConfig post_grid_from(const ExperimentConfig& c) {
    PostGridConfig g;
    g.n_t = c.post_n_t;
    g.n_y = c.post_n_y;
    g.y_max = c.post_y_max;
    g.threads = c.threads;
    return g;
}

StoppingGridConfig stopping_grid_from(const ExperimentConfig& c) {
    StoppingGridConfig g;
    g.n_t = c.n_t;
    g.n_y = c.n_y;
    g.y_max = c.y_max;
    g.scheme = c.scheme == "implicit" ? StoppingGridConfig::Scheme::Implicit : StoppingGridConfig::Scheme::Explicit;
    g.strict_cfl = c.strict_cfl;
    return g;
}

SimulationConfig simulation_from(const ExperimentConfig& c) {
    SimulationConfig s;
    s.x0 = c.x0;
    s.n_paths = c.n_paths;
    s.seed = c.seed;
    s.n_steps = c.n_steps;
    s.observation_times = c.observation_times;
    s.n_record = c.n_record;
    s.threads = c.threads;
    return s;
}

std::vector<std::string> artifact_header(const ExperimentConfig& cfg, const std::string& command) {
    std::vector<std::string> h{std::string(kVersion) + " " + command,
                               "units: money in dollars, time in years, rates annualized"};
    for (const auto& [k, v] : config_entries(cfg)) h.push_back("config " + k + " = " + v);
    return h;
}

namespace {

std::filesystem::path out_path(const ExperimentConfig& cfg, const std::string& name) {
    return std::filesystem::path(cfg.out_dir) / name;
}

std::shared_ptr<const PostValue> solve_post(const ExperimentConfig& cfg, const MarketEnvironment& env,
                                            const UtilitySpec& spec) {
    const PostGridConfig pg = post_grid_from(cfg);
    auto surface = std::make_shared<const ValueSurface>(build_post_surface(env, spec, pg));
    return std::make_shared<const PostValue>(std::move(surface), env, spec, pg.quad);
}

LifecycleModel solve_model(const ExperimentConfig& cfg) {
    const MarketEnvironment env = market_from(cfg);
    const IncomeLaborSpec inc = income_from(cfg, env);
    const UtilitySpec spec = utility_from(cfg);
    return assemble_lifecycle_model(env, inc, solve_post(cfg, env, spec), stopping_grid_from(cfg));
}

void write_boundary(const ExperimentConfig& cfg, const FreeBoundary& fb, CommandResult& res, const std::string& cmd) {
    CsvWriter w(out_path(cfg, "boundary.csv"), artifact_header(cfg, cmd), {"t", "b", "L_over_I"});
    for (std::size_t i = 0; i < fb.t.size(); ++i) w.row({fb.t[i], fb.b[i], fb.upper[i]});
    res.artifacts.push_back(w.path());
}

void write_paths(const ExperimentConfig& cfg, const SimulationResult& sim, const std::string& name,
                 CommandResult& res, const std::string& cmd) {
    CsvWriter w(out_path(cfg, name), artifact_header(cfg, cmd),
                {"path", "t", "Y", "X", "pi", "k", "c", "g", "retired"});
    for (std::size_t p = 0; p < sim.paths.size(); ++p) {
        const StrategyPath& sp = sim.paths[p];
        for (std::size_t i = 0; i < sp.t.size(); ++i)
            w.row({static_cast<double>(p), sp.t[i], sp.Y[i], sp.X[i], sp.pi[i], sp.k[i], sp.c[i], sp.g[i],
                   static_cast<double>(sp.retired[i])});
    }
    res.artifacts.push_back(w.path());
}

std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

CommandResult run_solve_post(const ExperimentConfig& cfg) {
    CommandResult res;
    const MarketEnvironment env = market_from(cfg);
    const UtilitySpec spec = utility_from(cfg);
    const ValueSurface s = build_post_surface(env, spec, post_grid_from(cfg));
    CsvWriter w(out_path(cfg, "post_surface.csv"), artifact_header(cfg, "solve-post"), {"t", "y", "value", "dy", "dyy"});
    for (std::size_t i = 0; i < s.nt(); ++i)
        for (std::size_t j = 0; j < s.ny(); ++j) {
            const ValueTriple q = s.node(i, j);
            w.row({s.t()[i], s.y()[j], q.value, q.dy, q.dyy});
        }
    res.artifacts.push_back(w.path());
    res.summary = "post surface " + std::to_string(s.nt()) + "x" + std::to_string(s.ny());
    return res;
}

CommandResult run_solve_boundary(const ExperimentConfig& cfg) {
    CommandResult res;
    const MarketEnvironment env = market_from(cfg);
    const IncomeLaborSpec inc = income_from(cfg, env);
    const StoppingSurface s = solve_vi_fdm(env, inc, stopping_grid_from(cfg));
    const FreeBoundary fb = extract_boundary(s, inc);
    {
        auto header = artifact_header(cfg, "solve-boundary");
        header.push_back("scheme " + s.scheme + ", substeps per row " + std::to_string(s.substeps));
        CsvWriter w(out_path(cfg, "stopping_surface.csv"), header, {"t", "y", "W", "exercise"});
        const std::size_t stride = std::max<std::size_t>(cfg.surface_stride, 1);
        for (std::size_t i = 0; i < s.t.size(); ++i) {
            if (i % stride != 0 && i + 1 != s.t.size()) continue;
            for (std::size_t j = 0; j < s.ny(); ++j)
                w.row({s.t[i], s.y[j], s.at(i, j), static_cast<double>(s.exercise[i * s.ny() + j])});
        }
        res.artifacts.push_back(w.path());
    }
    write_boundary(cfg, fb, res, "solve-boundary");
    res.summary = "b(0)=" + format_number(fb.b.front()) + " b(T-)=" + format_number(fb.terminal) +
                  " L(T)/I(T)=" + format_number(fb.terminal_target);
    return res;
}

CommandResult run_simulate(const ExperimentConfig& cfg) {
    CommandResult res;
    const LifecycleModel model = solve_model(cfg);
    const SimulationResult sim = simulate_lifecycle(model, simulation_from(cfg));
    write_paths(cfg, sim, "paths.csv", res, "simulate");
    const StatsSummary s = summarize(sim);
    CsvWriter w(out_path(cfg, "summary.csv"), artifact_header(cfg, "simulate"),
                {"quantity", "t", "mean", "std", "se", "n"});
    auto put = [&](const std::string& q, double t, const MomentStats& m) {
        w.row({q, format_number(t), format_number(m.mean), format_number(m.std), format_number(m.se),
               std::to_string(m.n)});
    };
    for (const auto& o : s.observations) {
        put("X", o.t, o.X);
        put("pi", o.t, o.pi);
        put("k", o.t, o.k);
        put("c", o.t, o.c);
        put("g", o.t, o.g);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    put("tau_all", nan, s.tau_all);
    put("tau_positive", nan, s.tau_positive);
    put("X_tau", nan, s.X_tau);
    put("pi_tau", nan, s.pi_tau);
    put("k_tau", nan, s.k_tau);
    put("c_tau", nan, s.c_tau);
    put("g_tau", nan, s.g_tau);
    w.row({"immediate_fraction", "nan", format_number(s.immediate_fraction), "nan", "nan", std::to_string(s.n_paths)});
    w.row({"y_star", "0", format_number(sim.y_star), "nan", "nan", "1"});
    w.row({"b0", "0", format_number(sim.b0), "nan", "nan", "1"});
    res.artifacts.push_back(w.path());
    res.summary = "mean tau " + format_number(s.tau_all.mean) + " (s.e. " + format_number(s.tau_all.se) + ")";
    return res;
}

CommandResult run_figure_data(const ExperimentConfig& cfg) {
    CommandResult res;
    const LifecycleModel model = solve_model(cfg);
    {
        CsvWriter w(out_path(cfg, "income_labor.csv"), artifact_header(cfg, "figure-data"),
                    {"t", "I", "L", "I_minus_L", "L_over_I"});
        for (double t : num::linspace(0.0, model.env.T, 201)) {
            const double I = model.inc.income(t), L = model.inc.labor(t);
            w.row({t, I, L, I - L, boundary_upper_bound(model.inc, t)});
        }
        res.artifacts.push_back(w.path());
    }
    write_boundary(cfg, model.boundary, res, "figure-data");
    SimulationConfig sc = simulation_from(cfg);
    sc.n_paths = std::max<std::size_t>(cfg.n_record, 1);
    sc.n_record = sc.n_paths;
    const SimulationResult sim = simulate_lifecycle(model, sc);
    {
        CsvWriter w(out_path(cfg, "sample_path.csv"), artifact_header(cfg, "figure-data"), {"t", "Y", "b", "retired"});
        const StrategyPath& p = sim.paths.front();
        for (std::size_t i = 0; i < p.t.size(); ++i)
            w.row({p.t[i], p.Y[i], p.t[i] < model.env.T ? model.boundary.at(p.t[i]) : std::nan(""),
                   static_cast<double>(p.retired[i])});
        res.artifacts.push_back(w.path());
    }
    write_paths(cfg, sim, "strategy_paths.csv", res, "figure-data");
    res.summary = "figure data for " + std::to_string(sim.paths.size()) + " sample paths";
    return res;
}

CommandResult run_oracle_check(const ExperimentConfig& cfg) {
    CommandResult res;
    const MarketEnvironment env = market_from(cfg);
    const IncomeLaborSpec inc = income_from(cfg, env);
    const StoppingSurface s = solve_vi_fdm(env, inc, stopping_grid_from(cfg));
    const FreeBoundary fb = extract_boundary(s, inc);
    const TreeResult tree = tree_oracle(env, inc, cfg.tree_steps);
    CsvWriter w(out_path(cfg, "oracle.csv"), artifact_header(cfg, "oracle-check"),
                {"quantity", "x", "fdm", "tree", "gap"});
    double worst_value = 0.0, worst_cells = 0.0;
    const double lo = 0.1 * cfg.y_max, hi = 0.9 * cfg.y_max;
    for (double y : num::linspace(lo, hi, 10)) {
        const std::size_t j = num::bracket(s.y, y);
        const double a = (y - s.y[j]) / s.dy;
        const double fdm = (1 - a) * s.at(0, j) + a * s.at(0, j + 1);
        const double tr = tree.value(0, y);
        const double gap = std::abs(fdm - tr) / std::max(std::abs(tr), 1e-300);
        worst_value = std::max(worst_value, gap);
        w.row({"W0_rel_gap", format_number(y), format_number(fdm), format_number(tr), format_number(gap)});
    }
    for (std::size_t i = 0; i < tree.b.size(); ++i) {
        const double bf = fb.at(tree.t[i]);
        const double cells = std::abs(bf - tree.b[i]) / s.dy;
        worst_cells = std::max(worst_cells, cells);
        if (i % 20 == 0 || i + 1 == tree.b.size())
            w.row({"boundary_cells", format_number(tree.t[i]), format_number(bf), format_number(tree.b[i]),
                   format_number(cells)});
    }
    w.comment("max relative value gap " + format_number(worst_value) + ", max boundary gap in cells " +
              format_number(worst_cells));
    res.artifacts.push_back(w.path());
    res.exit_code = (worst_value <= 0.01 && worst_cells <= 3.0) ? 0 : 1;
    res.summary = "tree vs FDM: value gap " + format_number(worst_value) + ", boundary gap " +
                  format_number(worst_cells) + " cells";
    return res;
}

CommandResult run_validate(const ExperimentConfig& cfg) {
    CommandResult res;
    struct Check {
        std::string name;
        double value;
        double threshold;
        bool pass;
        bool counted = true;
    };
    std::vector<Check> checks;
    auto at_most = [&](const std::string& n, double v, double thr) { checks.push_back({n, v, thr, v <= thr}); };
    auto at_least = [&](const std::string& n, double v, double thr) { checks.push_back({n, v, thr, v >= thr}); };

    const MarketEnvironment env = market_from(cfg);
    const IncomeLaborSpec inc = income_from(cfg, env);
    const UtilitySpec spec = utility_from(cfg);

    // dual against brute-force conjugate of u-bar
    {
        const auto table = tabulate_total_utility(spec, num::logspace(1e-6, 1e8, 400000));
        double worst = 0.0;
        for (double y : num::logspace(0.05, 20.0, 200)) {
            const double h = dual_h(y, spec), l = numeric_legendre(table, y).value;
            worst = std::max(worst, std::abs(h - l) / std::max(std::abs(h), 1e-12));
        }
        at_most("dual_vs_legendre_rel", worst, 1e-5);
    }
    // post-retirement surface shape
    const PostGridConfig pg = post_grid_from(cfg);
    auto surface = std::make_shared<const ValueSurface>(build_post_surface(env, spec, pg));
    auto post = std::make_shared<const PostValue>(surface, env, spec, pg.quad);
    {
        std::size_t convex = 0, decreasing = 0;
        const auto& ys = surface->y();
        for (std::size_t i = 0; i + 1 < surface->nt(); i += 25) {
            for (std::size_t j = 0; j + 1 < ys.size(); ++j)
                if (!(surface->node(i, j + 1).value < surface->node(i, j).value)) ++decreasing;
            for (std::size_t j = 1; j + 1 < ys.size(); ++j) {
                const double v0 = surface->node(i, j - 1).value, v1 = surface->node(i, j).value,
                             v2 = surface->node(i, j + 1).value;
                const double s1 = (v1 - v0) / (ys[j] - ys[j - 1]), s2 = (v2 - v1) / (ys[j + 1] - ys[j]);
                if (s2 - s1 < -1e-9 * (std::abs(s1) + std::abs(s2))) ++convex;
            }
        }
        at_most("post_convexity_violations", static_cast<double>(convex), 0.0);
        at_most("post_monotone_violations", static_cast<double>(decreasing), 0.0);
        double worst = 0.0;
        for (double t : {0.0, 0.5 * env.T, env.T})
            for (double y : {0.2, 0.5, 1.0, 3.0}) {
                const ValueTriple a = surface->eval(t, y), q = hatV_quadrature(t, y, env, spec, pg.quad);
                worst = std::max({worst, std::abs(a.dy - q.dy) / std::abs(q.dy), std::abs(a.dyy - q.dyy) / std::abs(q.dyy)});
            }
        at_most("post_derivatives_vs_quadrature_rel", worst, 1e-3);
        const McEstimate mc = hatV_mc(0.0, 1.0, cfg.mc_samples, cfg.seed, env, spec);
        const double q = hatV_quadrature(0.0, 1.0, env, spec).value;
        at_most("post_mc_zscore", std::abs(mc.value - q) / std::max(mc.std_error, 1e-300), 4.0);
    }
    // stopping problem
    const StoppingGridConfig sg = stopping_grid_from(cfg);
    auto stop = std::make_shared<const StoppingSurface>(solve_vi_fdm(env, inc, sg));
    const FreeBoundary fb = extract_boundary(*stop, inc);
    {
        double over = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < fb.b.size(); ++i) over = std::max(over, fb.b[i] - fb.upper[i]);
        at_most("boundary_minus_L_over_I", over, fb.dy);
        at_most("boundary_aged_monotone_violations", static_cast<double>(fb.monotone_violations), 0.0);
        at_most("boundary_terminal_gap", std::abs(fb.terminal - fb.terminal_target), 2.0 * fb.dy);
        const ObstacleReport ob = check_obstacle(*stop, env, inc);
        at_least("obstacle_min_value", ob.min_value, 0.0);
        at_most("obstacle_scaled_residual", ob.max_residual, 1e-3);
        at_most("obstacle_scaled_complementarity", ob.max_complementarity, 1e-3);
        at_most("obstacle_y_monotone_violations", static_cast<double>(ob.monotone_y_violations), 0.0);
        const auto pre = assemble_pre_value(stop, post, env, inc);
        const PreValueReport pr = check_pre_value(*pre, fb);
        at_least("pre_min_excess", pr.min_excess, -1e-10);
        at_most("pre_terminal_gap", pr.terminal_gap, 1e-12);
        at_most("pre_convexity_violations", static_cast<double>(pr.convexity_violations), 0.0);
        checks.push_back({"pre_nonmonotone_nodes", static_cast<double>(pr.monotone_violations), 0.0,
                          pr.monotone_violations == 0, false});
        at_most("pre_smooth_fit_gap", pr.max_smooth_fit_gap, 5.0 * fb.dy);
    }
    {
        const StructureReport st = check_structure(env, inc, sg);
        at_most("income_scaled_boundary_rise", st.income_shift, st.dy);
        at_most("labor_scaled_boundary_rise", st.labor_shift, st.dy);
    }
    if (spec.kind() == UtilityKind::PowerPair) {
        const GrowthReport g = growth_condition_check(env, cfg.beta, env.T_bar);
        checks.push_back({"growth_integral_finite", g.finite ? 1.0 : 0.0, 1.0, g.finite, false});
    }
    CsvWriter w(out_path(cfg, "validate.csv"), artifact_header(cfg, "validate"),
                {"check", "value", "threshold", "status"});
    std::size_t failed = 0;
    for (const auto& c : checks) {
        const std::string status = !c.counted ? "info" : (c.pass ? "pass" : "fail");
        if (c.counted && !c.pass) ++failed;
        w.row({c.name, format_number(c.value), format_number(c.threshold), status});
    }
    res.artifacts.push_back(w.path());
    res.exit_code = failed == 0 ? 0 : 1;
    res.summary = std::to_string(checks.size()) + " checks, " + std::to_string(failed) + " failed";
    return res;
}

std::string ordering(const std::vector<double>& v) {
    if (v.size() < 2) return "constant";
    bool inc = true, dec = true, sinc = true, sdec = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] < v[i - 1]) inc = sinc = false;
        if (v[i] > v[i - 1]) dec = sdec = false;
        if (v[i] == v[i - 1]) sinc = sdec = false;
    }
    if (inc && dec) return "constant";
    if (sinc) return "increasing";
    if (sdec) return "decreasing";
    if (inc) return "nondecreasing";
    if (dec) return "nonincreasing";
    return "mixed";
}

std::vector<double> table_values(int which) {
    switch (which) {
        case 1: return {15, 10, 8, 6, 4, 2};
        case 2: return {5, 10, 15, 20};
        case 3: return {2, 5, 10, 15, 20};
        case 4: return {0.7, 1.0, 1.3, 1.7, 1.9};
        default: throw ValidationError("table number must be 1, 2, 3 or 4");
    }
}

SweepResult sweep(const ExperimentConfig& cfg, const std::string& parameter, const std::vector<double>& values) {
    static const std::map<std::string, double ExperimentConfig::*> fields{
        {"C", &ExperimentConfig::C}, {"x0", &ExperimentConfig::x0}, {"a", &ExperimentConfig::a},
        {"ell", &ExperimentConfig::ell}};
    const auto field = fields.find(parameter);
    if (field == fields.end()) throw ValidationError("sweep parameter must be one of C, x0, a, ell");
    if (values.empty()) throw ValidationError("sweep needs at least one value");
    SweepResult out;
    out.parameter = parameter;
    out.cells.resize(values.size());
    const bool per_cell_post = parameter == "a";
    std::shared_ptr<const PostValue> shared_post;
    if (!per_cell_post) {
        ExperimentConfig base = cfg;
        shared_post = solve_post(base, market_from(base), utility_from(base));
    }
    const unsigned inner = values.size() > 1 ? 1u : cfg.threads;
    num::parallel_for(values.size(), cfg.threads, [&](std::size_t i) {
        SweepCell& cell = out.cells[i];
        cell.value = values[i];
        ExperimentConfig c = cfg;
        c.*(field->second) = values[i];
        c.threads = inner;
        try {
            const MarketEnvironment env = market_from(c);
            const IncomeLaborSpec inc = income_from(c, env);
            const UtilitySpec spec = utility_from(c);
            auto post = per_cell_post ? solve_post(c, env, spec) : shared_post;
            const LifecycleModel model = assemble_lifecycle_model(env, inc, post, stopping_grid_from(c));
            SimulationConfig sc = simulation_from(c);
            sc.n_record = 0;
            const SimulationResult sim = simulate_lifecycle(model, sc);
            cell.summary = summarize(sim);
            cell.y_star = sim.y_star;
            cell.b0 = sim.b0;
            cell.boundary = model.boundary;
            const EnvelopeData& e = spec.envelope();
            cell.k_minus = e.degenerate ? std::nan("") : e.k_minus;
            cell.k_plus = e.degenerate ? std::nan("") : e.k_plus;
            cell.ok = true;
        } catch (const std::exception& ex) {
            cell.ok = false;
            cell.error = ex.what();
        }
    });
    return out;
}

namespace {

const char* table_parameter(int which) {
    switch (which) {
        case 1: return "C";
        case 2: return "x0";
        case 3: return "a";
        case 4: return "ell";
        default: throw ValidationError("table number must be 1, 2, 3 or 4");
    }
}

std::vector<double> tau_means(const SweepResult& r) {
    std::vector<double> v;
    for (const auto& c : r.cells)
        if (c.ok) v.push_back(c.summary.tau_all.mean);
    return v;
}

}  // namespace

CommandResult run_table(const ExperimentConfig& cfg, int which, const std::vector<double>& values_in) {
    CommandResult res;
    const std::string param = table_parameter(which);
    const std::vector<double> values = values_in.empty() ? table_values(which) : values_in;
    const SweepResult sw = sweep(cfg, param, values);
    std::vector<std::string> cols{"row", "stat"};
    for (double v : values) cols.push_back(param + "=" + format_number(v));
    const std::string cmd = "table" + std::to_string(which);
    CsvWriter w(out_path(cfg, cmd + ".csv"), artifact_header(cfg, cmd), cols);
    auto put = [&](const std::string& row, const std::string& stat, const std::function<double(const SweepCell&)>& f) {
        std::vector<std::string> cells{row, stat};
        for (const auto& c : sw.cells) cells.push_back(c.ok ? format_number(f(c)) : "nan");
        w.row(cells);
    };
    {
        std::vector<std::string> cells{"status", "-"};
        for (const auto& c : sw.cells) cells.push_back(c.ok ? "ok" : "error: " + sanitize(c.error));
        w.row(cells);
    }
    if (which <= 2) {
        for (std::size_t k = 0; k < cfg.observation_times.size(); ++k) {
            const std::string row = "X(" + format_number(cfg.observation_times[k]) + ")";
            put(row, "mean", [k](const SweepCell& c) { return c.summary.observations[k].X.mean; });
            put(row, "std", [k](const SweepCell& c) { return c.summary.observations[k].X.std; });
        }
    }
    put("tau", "mean", [](const SweepCell& c) { return c.summary.tau_all.mean; });
    put("tau", "se", [](const SweepCell& c) { return c.summary.tau_all.se; });
    put("tau_positive", "mean", [](const SweepCell& c) { return c.summary.tau_positive.mean; });
    put("tau_positive", "se", [](const SweepCell& c) { return c.summary.tau_positive.se; });
    put("immediate_fraction", "value", [](const SweepCell& c) { return c.summary.immediate_fraction; });
    if (which >= 3) {
        put("X(tau)", "mean", [](const SweepCell& c) { return c.summary.X_tau.mean; });
        put("X(tau)", "std", [](const SweepCell& c) { return c.summary.X_tau.std; });
        if (which == 3) {
            put("k_minus", "value", [](const SweepCell& c) { return c.k_minus; });
            put("k_plus", "value", [](const SweepCell& c) { return c.k_plus; });
        }
        put("k(tau)", "mean", [](const SweepCell& c) { return c.summary.k_tau.mean; });
        put("c(tau)", "mean", [](const SweepCell& c) { return c.summary.c_tau.mean; });
        put("c(tau)", "share", [](const SweepCell& c) { return c.summary.c_tau.mean / c.summary.k_tau.mean; });
        put("g(tau)", "mean", [](const SweepCell& c) { return c.summary.g_tau.mean; });
        put("g(tau)", "share", [](const SweepCell& c) { return c.summary.g_tau.mean / c.summary.k_tau.mean; });
    }
    w.comment("tau ordering across columns: " + ordering(tau_means(sw)));
    res.artifacts.push_back(w.path());
    std::size_t failed = 0;
    for (const auto& c : sw.cells) failed += c.ok ? 0 : 1;
    res.summary = cmd + ": " + std::to_string(sw.cells.size() - failed) + " cells solved, " + std::to_string(failed) +
                  " failed; tau " + ordering(tau_means(sw));
    return res;
}

CommandResult run_sweep(const ExperimentConfig& cfg, const std::string& parameter, const std::vector<double>& values) {
    CommandResult res;
    const SweepResult sw = sweep(cfg, parameter, values);
    CsvWriter w(out_path(cfg, "sweep_" + parameter + ".csv"), artifact_header(cfg, "sweep " + parameter),
                {"value", "status", "y_star", "b0", "b_late", "tau_mean", "tau_se", "tau_positive_mean",
                 "tau_positive_se", "immediate_fraction", "X_tau_mean", "X_tau_std", "k_tau_mean", "c_tau_mean",
                 "g_tau_mean"});
    std::vector<double> taus, lates;
    bool immediate_consistent = true;
    for (const auto& c : sw.cells) {
        if (!c.ok) {
            std::vector<std::string> cells{format_number(c.value), "error: " + sanitize(c.error)};
            cells.resize(15, "nan");
            w.row(cells);
            continue;
        }
        const StatsSummary& s = c.summary;
        const double late = c.boundary.at(c.boundary.T - 0.1);
        taus.push_back(s.tau_all.mean);
        lates.push_back(late);
        const bool immediate = c.y_star <= c.b0;
        if (immediate != (s.immediate_fraction == 1.0)) immediate_consistent = false;
        w.row({format_number(c.value), "ok", format_number(c.y_star), format_number(c.b0), format_number(late),
               format_number(s.tau_all.mean), format_number(s.tau_all.se), format_number(s.tau_positive.mean),
               format_number(s.tau_positive.se), format_number(s.immediate_fraction), format_number(s.X_tau.mean),
               format_number(s.X_tau.std), format_number(s.k_tau.mean), format_number(s.c_tau.mean),
               format_number(s.g_tau.mean)});
    }
    w.comment("ordering tau_mean: " + ordering(taus));
    w.comment("ordering b_late (b at T - 0.1): " + ordering(lates));
    w.comment(std::string("immediate retirement exactly where y* <= b(0): ") + (immediate_consistent ? "yes" : "no"));
    res.artifacts.push_back(w.path());
    std::size_t failed = 0;
    for (const auto& c : sw.cells) failed += c.ok ? 0 : 1;
    res.summary = "sweep " + parameter + ": " + std::to_string(sw.cells.size() - failed) + " cells solved, " +
                  std::to_string(failed) + " failed; tau " + ordering(taus);
    return res;
}

}  // namespace retire
