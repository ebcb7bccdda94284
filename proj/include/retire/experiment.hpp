#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "retire/lifecycle.hpp"

namespace retire {

/// Flat `block.key = value` configuration. Defaults are the baseline set.
struct ExperimentConfig {
    // market
    double sigma = 0.4;
    double mu = 0.1;                 // excess return
    std::optional<double> drift;     // raw stock drift; when set, mu = drift - r
    double r = 0.03;
    double rho = 0.1;
    // horizon
    double T = 2.0;
    double T_bar = 2.5;
    // utility
    std::string utility = "power_pair";
    double alpha = 0.5, beta = 0.75, a = 10.0;
    double phi = 2.0, psi = 0.5, c0 = 1.0, b0 = 2.0;
    // income
    double C = 5.0, K_prime = 0.08, K = 1.3, ell = 1.0;
    // solver
    std::size_t n_t = 6000, n_y = 300;
    double y_max = 10.0;
    std::string scheme = "explicit";
    bool strict_cfl = false;
    std::size_t post_n_t = 251, post_n_y = 300;
    double post_y_max = 20.0;
    std::size_t mc_samples = 100;
    std::size_t tree_steps = 2000;
    // simulation
    double x0 = 10.0;
    std::size_t n_paths = 20000;
    std::uint64_t seed = 20240601;
    std::size_t n_steps = 1000;
    std::vector<double> observation_times{0.5, 1.0, 1.5, 2.0};
    std::size_t n_record = 5;
    // output
    std::string out_dir = "out";
    std::size_t surface_stride = 60;  // t-rows between exported stopping-surface rows
    // runtime only; never echoed since results do not depend on it
    unsigned threads = 1;
};

/// Parses `key = value` lines (blank lines and `#` comments ignored) on top of `base`.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path);
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Canonical (key, value) listing in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);

MarketEnvironment market_from(const ExperimentConfig& cfg);
IncomeLaborSpec income_from(const ExperimentConfig& cfg, const MarketEnvironment& env);
UtilitySpec utility_from(const ExperimentConfig& cfg);
PostGridConfig post_grid_from(const ExperimentConfig& cfg);
StoppingGridConfig stopping_grid_from(const ExperimentConfig& cfg);
SimulationConfig simulation_from(const ExperimentConfig& cfg);

/// Comment block embedded in every artifact: version, units, resolved config.
std::vector<std::string> artifact_header(const ExperimentConfig& cfg, const std::string& command);

struct CommandResult {
    int exit_code = 0;
    std::vector<std::filesystem::path> artifacts;
    std::string summary;  // one-line human-readable outcome
};

CommandResult run_solve_post(const ExperimentConfig& cfg);
CommandResult run_solve_boundary(const ExperimentConfig& cfg);
CommandResult run_simulate(const ExperimentConfig& cfg);
CommandResult run_figure_data(const ExperimentConfig& cfg);
CommandResult run_oracle_check(const ExperimentConfig& cfg);
CommandResult run_validate(const ExperimentConfig& cfg);
/// Tables 1-4: sweeps over C, x0, a and ell in the published row layout.
CommandResult run_table(const ExperimentConfig& cfg, int which, const std::vector<double>& values = {});
CommandResult run_sweep(const ExperimentConfig& cfg, const std::string& parameter, const std::vector<double>& values);

struct SweepCell {
    double value = 0.0;
    bool ok = false;
    std::string error;
    double y_star = 0.0;
    double b0 = 0.0;
    double k_minus = 0.0, k_plus = 0.0;
    StatsSummary summary;
    FreeBoundary boundary;
};

struct SweepResult {
    std::string parameter;
    std::vector<SweepCell> cells;
};

/// One solve + simulation per value of `parameter` (C, x0, a or ell); failing cells are recorded, not thrown.
SweepResult sweep(const ExperimentConfig& cfg, const std::string& parameter, const std::vector<double>& values);

/// "increasing", "decreasing", "nondecreasing", "nonincreasing", "constant" or "mixed".
std::string ordering(const std::vector<double>& values);

/// Paper parameter values for table 1..4.
std::vector<double> table_values(int which);

}  // namespace retire
