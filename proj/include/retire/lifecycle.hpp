#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "retire/market.hpp"
#include "retire/post_solver.hpp"
#include "retire/stopping_solver.hpp"
#include "retire/utility.hpp"

namespace retire {

/// Everything a simulation needs: V-hat, the stopping surface, b(t) and W-hat.
struct LifecycleModel {
    MarketEnvironment env;
    IncomeLaborSpec inc;
    UtilitySpec spec;
    std::shared_ptr<const PostValue> post;
    std::shared_ptr<const StoppingSurface> stop;
    FreeBoundary boundary;
    std::shared_ptr<const PreValue> pre;
};

LifecycleModel solve_lifecycle_model(const MarketEnvironment& env, const IncomeLaborSpec& inc, const UtilitySpec& spec,
                                     const PostGridConfig& post_cfg, const StoppingGridConfig& stop_cfg);

/// Reuses a solved post surface (sweeps over income/labor parameters).
LifecycleModel assemble_lifecycle_model(const MarketEnvironment& env, const IncomeLaborSpec& inc,
                                        std::shared_ptr<const PostValue> post, const StoppingGridConfig& stop_cfg);

/// Root of dy W-hat(0, y) + x = 0 on [y_lo, y_hi].
double calibrate_initial_dual(double x, const DualValue& dual, double y_lo, double y_hi);

/// Same, over the post surface's y-range.
double calibrate_initial_dual(double x, const LifecycleModel& model);

struct StrategySnapshot {
    double X = 0.0;
    double pi = 0.0;  // total dollars in stocks
    double k = 0.0;
    double c = 0.0;
    double g = 0.0;
};

struct StrategyPath {
    std::vector<double> t, Y, X, pi, k, c, g;
    std::vector<std::uint8_t> retired;
    double tau = 0.0;
    std::uint64_t stream = 0;
};

struct PathOutcome {
    double tau = 0.0;
    bool immediate = false;      // y* <= b(0)
    bool crossed = false;        // retired strictly before T
    StrategySnapshot at_tau;
    std::vector<StrategySnapshot> observed;  // at the configured observation times
};

struct SimulationConfig {
    double x0 = 10.0;
    std::size_t n_paths = 20000;
    std::uint64_t seed = 20240601;
    std::size_t n_steps = 1000;   // grid steps on [0, horizon]
    double horizon = 0.0;         // 0 means T
    std::vector<double> observation_times{0.5, 1.0, 1.5, 2.0};
    std::size_t n_record = 0;     // leading paths stored in full
    bool zero_noise = false;
    unsigned threads = 1;
};

struct SimulationResult {
    double y_star = 0.0;
    double b0 = 0.0;
    std::vector<PathOutcome> outcomes;
    std::vector<StrategyPath> paths;  // first n_record paths
    std::vector<double> observation_times;  // snapped to the grid
};

SimulationResult simulate_lifecycle(const LifecycleModel& model, const SimulationConfig& cfg);

struct MomentStats {
    double mean = 0.0;
    double std = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

MomentStats moments(const std::vector<double>& values);

struct ObservationStats {
    double t = 0.0;
    MomentStats X, pi, k, c, g;
};

struct StatsSummary {
    std::size_t n_paths = 0;
    std::vector<ObservationStats> observations;
    MomentStats tau_all;       // zeros of immediate retirement included
    MomentStats tau_positive;  // paths with tau > 0 only
    double immediate_fraction = 0.0;
    double crossed_fraction = 0.0;
    MomentStats X_tau, pi_tau, k_tau, c_tau, g_tau;
};

StatsSummary summarize(const SimulationResult& result);

/// Spearman rank correlation of X* and k* across paths at observation `index`.
double comonotonicity(const SimulationResult& result, std::size_t index);

struct ReplicationConfig {
    double x0 = 10.0;
    std::vector<double> dts{2e-4, 1e-4, 5e-5};  // each a multiple of the smallest
    std::size_t n_paths = 10;
    std::uint64_t seed = 7;
    double horizon = 0.0;            // 0 means T
    bool zero_noise = false;
    bool retired_from_start = false;  // post-retirement regime only
    bool milstein = true;             // derivative-free diffusion correction
    unsigned threads = 1;
};

struct ReplicationLevel {
    double dt = 0.0;
    double rms_gap = 0.0;              // RMS over paths of per-path relative gaps
    std::vector<double> path_gaps;     // rms(X_sde - X*) / rms(X*) per path
};

struct ReplicationReport {
    std::vector<ReplicationLevel> levels;  // sorted by decreasing dt
};

/// Integrates the wealth SDE with the recorded strategies and compares it with -dy W-hat along the same paths.
ReplicationReport replicate_wealth(const LifecycleModel& model, const ReplicationConfig& cfg);

}  // namespace retire
