#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "retire/market.hpp"
#include "retire/post_solver.hpp"
#include "retire/value_surface.hpp"

namespace retire {

struct StoppingGridConfig {
    enum class Scheme { Explicit, Implicit };
    double y_max = 10.0;
    std::size_t n_y = 300;   // intervals in y
    std::size_t n_t = 6000;  // intervals in t on [0, T]
    Scheme scheme = Scheme::Explicit;
    bool strict_cfl = false;  // explicit: error instead of sub-stepping
    double psor_omega = 1.3;
    double psor_tol = 1e-13;
    int psor_max_iter = 20000;
};

/// Discounted stopping value on a uniform (t, y) grid, rows t_0 = 0 .. t_n = T.
struct StoppingSurface {
    std::vector<double> t;
    std::vector<double> y;
    std::vector<double> W;                // row-major, t.size() x y.size()
    std::vector<std::uint8_t> exercise;   // 1 where W == 0
    double dt = 0.0;
    double dy = 0.0;
    double cfl_dt = 0.0;  // binding explicit step bound over the solve
    int substeps = 1;
    std::string scheme;

    std::size_t ny() const { return y.size(); }
    double at(std::size_t i, std::size_t j) const { return W[i * y.size() + j]; }
    std::span<const double> row(std::size_t i) const { return {W.data() + i * y.size(), y.size()}; }
};

/// dt <= dy^2 / (|theta|^2 y_max^2 + |rho - r| y_max dy) at time t.
double explicit_step_bound(const MarketEnvironment& env, double t, const StoppingGridConfig& cfg);

/// Running payoff e^{-int_0^t rho} (y I(t) - L(t)).
double stopping_payoff(const MarketEnvironment& env, const IncomeLaborSpec& inc, double t, double y);

/// Value of working until T from (t, y), discounted to time 0 and floored at 0.
double continue_to_T(const MarketEnvironment& env, const IncomeLaborSpec& inc, double t, double y);

StoppingSurface solve_vi_fdm(const MarketEnvironment& env, const IncomeLaborSpec& inc, const StoppingGridConfig& cfg);

struct FreeBoundary {
    std::vector<double> t;      // rows 0 .. n-1 (t < T)
    std::vector<double> b;
    std::vector<double> upper;  // L(t)/I(t)
    std::size_t monotone_violations = 0;  // decreases by more than one cell on [T - ell, T]
    double terminal = 0.0;                // b at the last row before T
    double terminal_target = 0.0;         // L(T)/I(T)
    double dy = 0.0;
    double T = 0.0;

    /// Linear interpolation in t; held constant on the last interval.
    double at(double time) const;
};

FreeBoundary extract_boundary(const StoppingSurface& surface, const IncomeLaborSpec& inc);

struct ObstacleReport {
    double max_residual = 0.0;         // continuation nodes, scaled by max payoff
    double max_complementarity = 0.0;  // |W * residual|, scaled
    double min_value = 0.0;
    std::size_t monotone_y_violations = 0;  // every 10th row
};

ObstacleReport check_obstacle(const StoppingSurface& surface, const MarketEnvironment& env,
                              const IncomeLaborSpec& inc);

/// Stopping surface with finite-difference derivative tables.
ValueSurface stopping_value_surface(const StoppingSurface& surface);

/// W-hat = V-hat + e^{int_0^t rho} W before T, V-hat from T on. W is zero up to
/// b(t), quadratic from b(t) to the first continuation node, Hermite beyond.
class PreValue : public DualValue {
public:
    PreValue(std::shared_ptr<const DualValue> post, std::shared_ptr<const StoppingSurface> stop, MarketEnvironment env,
             IncomeLaborSpec inc);
    ValueTriple eval(double t, double y) const override;
    /// e^{int_0^t rho} W part alone.
    ValueTriple stopping_part(double t, double y) const;
    const DualValue& post() const { return *post_; }
    const StoppingSurface& stopping() const { return *stop_; }

private:
    /// Near-boundary quadratic c u^2, u = y - b, on (b, y_j) of one time row.
    struct RowEdge {
        double b = 0.0;
        std::size_t j = 0;  // first continuation node; 0 when the row has none
        double c = 0.0;
    };
    ValueTriple row_part(std::size_t i, double y) const;

    std::shared_ptr<const DualValue> post_;
    std::shared_ptr<const StoppingSurface> stop_;
    ValueSurface w_;
    std::vector<RowEdge> edges_;
    MarketEnvironment env_;
    IncomeLaborSpec inc_;
};

std::shared_ptr<PreValue> assemble_pre_value(std::shared_ptr<const StoppingSurface> stop,
                                             std::shared_ptr<const DualValue> post, const MarketEnvironment& env,
                                             const IncomeLaborSpec& inc);

struct PreValueReport {
    double min_excess = 0.0;              // min of W-hat - V-hat
    double terminal_gap = 0.0;            // max |W-hat(T) - V-hat(T)|
    std::size_t convexity_violations = 0; // negative second differences beyond tolerance
    std::size_t monotone_violations = 0;  // nondecreasing first differences (expected where X* < 0)
    double max_smooth_fit_gap = 0.0;      // one-sided y-derivative jump at b(t)
};

PreValueReport check_pre_value(const PreValue& pre, const FreeBoundary& boundary, std::size_t n_rows = 20);

struct PreStrategy {
    StrategyPoint point;
    bool retired_region = false;  // query fell in y <= b(t); post strategy returned
};

PreStrategy pre_strategy(const PreValue& pre, const FreeBoundary& boundary, double t, double y,
                         const MarketEnvironment& env, const UtilitySpec& spec);

struct TreeResult {
    std::vector<double> t;      // time nodes 0 .. T
    std::vector<double> x;      // log-y nodes
    std::vector<double> W;      // row-major values
    std::vector<double> b;      // boundary per time row (rows 0 .. n-1)
    double dx = 0.0;
    double value(std::size_t i, double y) const;
};

/// Trinomial backward induction for the stopping problem on log Y.
TreeResult tree_oracle(const MarketEnvironment& env, const IncomeLaborSpec& inc, std::size_t n_time_steps,
                       double y_lo = 1e-3, double y_hi = 50.0);

struct StructureReport {
    double income_shift = 0.0;  // max over t of b_scaled_I - b (should be <= dy)
    double labor_shift = 0.0;   // max over t of b - b_scaled_L (should be <= dy)
    double dy = 0.0;
    bool income_ok = false;
    bool labor_ok = false;
    FreeBoundary base, income_scaled, labor_scaled;
};

/// Comparative statics of b under I -> factor*I and L -> factor*L.
StructureReport check_structure(const MarketEnvironment& env, const IncomeLaborSpec& inc,
                                const StoppingGridConfig& cfg, double factor = 1.1);

}  // namespace retire
