#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "retire/error.hpp"
#include "retire/experiment.hpp"

namespace {

int report_error(const std::string& kind, const std::string& message, int code) {
    nlohmann::json j{{"error", kind}, {"message", message}, {"exit_code", code}};
    std::cerr << j.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lifecycle consumption, investment and retirement solver"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "simulation seed");
    auto* out_opt = app.add_option("--out", out_dir, "artifact directory");
    app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 256u));
    app.add_option("--set", overrides, "override a config key (key=value), repeatable");

    auto* solve_post = app.add_subcommand("solve-post", "post-retirement dual value surface");
    auto* solve_boundary = app.add_subcommand("solve-boundary", "stopping surface and free boundary");
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo lifecycle paths and summary statistics");
    auto* figure = app.add_subcommand("figure-data", "income/labor curves, boundary and sample paths");
    auto* oracle = app.add_subcommand("oracle-check", "finite-difference solver against the trinomial tree");
    auto* validate = app.add_subcommand("validate", "numerical and structural self-checks");
    std::vector<CLI::App*> tables;
    std::vector<double> table_values;
    for (int k = 1; k <= 4; ++k) {
        auto* sub = app.add_subcommand("table" + std::to_string(k), "sensitivity table " + std::to_string(k));
        sub->add_option("--values", table_values, "override the column values")->delimiter(',');
        tables.push_back(sub);
    }
    auto* sweep = app.add_subcommand("sweep", "one-parameter sweep");
    std::string param;
    std::vector<double> values;
    sweep->add_option("param", param, "C, x0, a or ell")->required()->check(CLI::IsMember({"C", "x0", "a", "ell"}));
    sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        retire::ExperimentConfig cfg = config_path.empty() ? retire::ExperimentConfig{} : retire::load_config(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw retire::ValidationError("--set expects key=value, got '" + kv + "'");
            retire::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (*seed_opt) cfg.seed = seed;
        if (*out_opt) cfg.out_dir = out_dir;
        cfg.threads = threads;

        retire::CommandResult res;
        if (*solve_post)
            res = retire::run_solve_post(cfg);
        else if (*solve_boundary)
            res = retire::run_solve_boundary(cfg);
        else if (*simulate)
            res = retire::run_simulate(cfg);
        else if (*figure)
            res = retire::run_figure_data(cfg);
        else if (*oracle)
            res = retire::run_oracle_check(cfg);
        else if (*validate)
            res = retire::run_validate(cfg);
        for (int k = 1; k <= 4; ++k)
            if (*tables[k - 1]) res = retire::run_table(cfg, k, table_values);
        if (*sweep) res = retire::run_sweep(cfg, param, values);

        std::cout << res.summary << '\n';
        for (const auto& p : res.artifacts) std::cout << "wrote " << p.string() << '\n';
        return res.exit_code;
    } catch (const retire::ValidationError& e) {
        return report_error("validation", e.what(), 1);
    } catch (const retire::SolverError& e) {
        return report_error("solver", e.what(), 2);
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), 2);
    }
}
