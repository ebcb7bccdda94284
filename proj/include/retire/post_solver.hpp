#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>

#include "retire/market.hpp"
#include "retire/utility.hpp"
#include "retire/value_surface.hpp"

namespace retire {

enum class ExpectationMethod {
    Auto,           // partial moments for power-term duals, Gauss-Hermite otherwise
    PartialMoment,  // exact lognormal partial moments per power term
    GaussHermite,   // quadrature over the normal driver
};

struct QuadratureOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-13;
    ExpectationMethod method = ExpectationMethod::Auto;
    std::size_t gh_nodes = 64;
};

/// V-hat(t, y) = int_t^{T_bar} e^{-int rho} E[h(Y(s)) | Y(t) = y] ds with its
/// first and second y-derivatives, differentiated under the integral.
ValueTriple hatV_quadrature(double t, double y, const MarketEnvironment& env, const UtilitySpec& spec,
                            const QuadratureOptions& opts = {});

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Monte-Carlo estimate with exact Y sampling and trapezoid time quadrature.
McEstimate hatV_mc(double t, double y, std::size_t n_samples, std::uint64_t seed, const MarketEnvironment& env,
                   const UtilitySpec& spec, std::size_t n_steps = 500);

struct PostGridConfig {
    std::size_t n_t = 251;
    std::size_t n_y = 300;
    double y_max = 20.0;
    double y_min_factor = 1e-3;  // y_min = factor * kink (or factor when no kink)
    unsigned threads = 1;
    QuadratureOptions quad;
};

/// Log-spaced y-grid with the dual kink inserted as an exact node.
std::vector<double> post_y_grid(const UtilitySpec& spec, const PostGridConfig& cfg);

ValueSurface build_post_surface(const MarketEnvironment& env, const UtilitySpec& spec, const PostGridConfig& cfg);

/// Surface lookup with exact quadrature outside the grid.
class PostValue : public DualValue {
public:
    PostValue(std::shared_ptr<const ValueSurface> surface, MarketEnvironment env, UtilitySpec spec,
              QuadratureOptions opts = {});
    ValueTriple eval(double t, double y) const override;
    const ValueSurface& surface() const { return *surface_; }
    std::shared_ptr<const ValueSurface> surface_ptr() const { return surface_; }
    const MarketEnvironment& env() const { return env_; }
    const UtilitySpec& spec() const { return spec_; }

private:
    std::shared_ptr<const ValueSurface> surface_;
    MarketEnvironment env_;
    UtilitySpec spec_;
    QuadratureOptions opts_;
};

struct DerivativeReport {
    double dy = 0.0;
    double dyy = 0.0;
    double dy_fd = 0.0;   // fourth-order central difference of the value
    double dyy_fd = 0.0;
    double rel_gap = 0.0;
    bool edge = false;    // stencil leaves the grid
};

/// Surface derivatives cross-validated against central differences of the value.
DerivativeReport hatV_derivatives(const ValueSurface& surface, double t, double y);

struct PrimalResult {
    double value = 0.0;
    double y_opt = 0.0;
    bool on_edge = false;
};

/// V(t, x) = inf_y (V-hat(t, y) + x y) over a y-grid, refined by golden section.
PrimalResult primal_value(const DualValue& dual, const std::vector<double>& y_grid, double t, double x);

struct StrategyPoint {
    double X = 0.0;            // wealth
    Eigen::VectorXd pi;        // dollar amounts in each stock
    double pi_total = 0.0;     // sum of pi
    double k = 0.0;            // total consumption
    double c = 0.0;
    double g = 0.0;
};

StrategyPoint post_strategy(const DualValue& dual, double t, double y, const MarketEnvironment& env,
                            const UtilitySpec& spec);

/// 1/2 |theta|^2 y^2 V'' + (rho - r) y V' - rho V + h(y) for a time-independent V.
double stationary_residual(const ValueTriple& v, double y, const MarketEnvironment& env, const UtilitySpec& spec);

struct ApyClosedForm {
    ValueTriple v;
    std::array<double, 6> C{};
    double kink = 0.0;
};

/// Piecewise power solution C1 y^{1-1/phi} + C2 y + C3 + (C4 y^{1-1/psi} + C5 y + C6) 1{y < b0^{-psi}}.
ApyClosedForm apy_closed_form(double y, const ApyParams& p, const MarketEnvironment& env);

struct ApySmoothFit {
    double n_plus = 0.0;   // root > 1 of 1/2 |theta|^2 n(n-1) + (rho - r) n - rho = 0
    double n_minus = 0.0;  // negative root
    double A = 0.0;        // coefficient of y^{n_plus} below the kink
    double B = 0.0;        // coefficient of y^{n_minus} at and above the kink
    double kink = 0.0;
};

/// Homogeneous corrections that make the piecewise power solution C1 at the kink.
ApySmoothFit apy_smooth_fit(const ApyParams& p, const MarketEnvironment& env);
ValueTriple apy_smooth_fit_value(double y, const ApyParams& p, const MarketEnvironment& env);

struct InfiniteHorizonResult {
    ValueTriple v;
    double tail_bound = 0.0;  // analytic bound on the truncated tail of the value
    double horizon = 0.0;     // truncation point
};

/// Time-independent V-hat for constant coefficients and T_bar = infinity.
InfiniteHorizonResult infinite_horizon_hatV(double y, const MarketEnvironment& env, const UtilitySpec& spec,
                                            double rel_tol = 1e-11);

/// x + int_tau^{T_bar} e^{-int_tau^s r} pension(s) ds.
double pension_adjusted_wealth(double x, double tau, const Schedule& pension, const MarketEnvironment& env);

}  // namespace retire
