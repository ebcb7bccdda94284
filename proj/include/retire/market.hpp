#pragma once

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

namespace retire {

/// Time-dependent coefficient: c0 + c1*t plus optional sampled tables,
/// the latter interpolated by monotone cubic Hermite (Fritsch-Carlson).
class Schedule {
public:
    Schedule() = default;
    static Schedule constant(double v);
    static Schedule linear(double c0, double c1);
    static Schedule tabulated(std::vector<double> t, std::vector<double> v);

    double operator()(double t) const;
    /// Closed form for the affine part, composite Simpson for tables.
    double integral(double t0, double t1) const;
    bool is_constant() const { return c1_ == 0.0 && tables_.empty(); }
    double min_on(double t0, double t1, int samples = 201) const;

    Schedule operator+(const Schedule& other) const;

private:
    struct Table {
        std::vector<double> t, v, slope;
        double eval(double x) const;
    };
    double c0_ = 0.0;
    double c1_ = 0.0;
    std::vector<Table> tables_;
};

/// Market coefficients. Excess return mu and volatility sigma are constant;
/// r and rho may vary in time.
struct MarketEnvironment {
    Schedule r;
    Schedule rho;
    Eigen::VectorXd mu;     // excess return over r, 1/year
    Eigen::MatrixXd sigma;  // 1/sqrt(year)
    double T = 2.0;         // mandatory retirement age, years
    double T_bar = 2.5;     // horizon, years; may be +infinity

    /// Validates dimensions, invertibility and positivity; caches theta.
    static MarketEnvironment make(Schedule r, Schedule rho, Eigen::VectorXd mu, Eigen::MatrixXd sigma, double T,
                                  double T_bar);
    /// Scalar convenience constructor with constant coefficients.
    static MarketEnvironment scalar(double r, double rho, double mu, double sigma, double T, double T_bar);

    std::size_t dim() const { return static_cast<std::size_t>(mu.size()); }
    const Eigen::VectorXd& theta() const { return theta_; }
    double theta_norm2() const { return theta_.squaredNorm(); }
    bool constant_rates() const { return r.is_constant() && rho.is_constant(); }

    /// Replaces theta by a constrained market price of risk.
    MarketEnvironment with_theta(const Eigen::VectorXd& theta_hat) const;

private:
    Eigen::VectorXd theta_;
};

/// I(t) = C e^{K' t}; L(t) quadratic on [0, T-ell] and e^{K t} after, C2 at T-ell.
struct IncomeLaborSpec {
    double C = 5.0;
    double K_prime = 0.08;
    double K = 1.3;
    double ell = 1.0;
    double T = 2.0;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
    double income_scale = 1.0;
    double labor_scale = 1.0;

    double income(double t) const;
    double labor(double t) const;
    double income_rate(double t) const;  // I'/I
    double labor_rate(double t) const;   // L'/L
    bool income_vanishes() const { return C * income_scale == 0.0; }

    /// int_t^T e^{-r(u-t)} I(u) du for constant r.
    double discounted_income(double t, double r) const;
    /// int_t^T e^{-rho(u-t)} L(u) du for constant rho.
    double discounted_labor(double t, double rho) const;

    IncomeLaborSpec scaled(double income_factor, double labor_factor) const;
};

/// Constructs and validates the income/labor pair; every violated condition
/// is listed in the thrown ValidationError.
IncomeLaborSpec build_income_labor(double C, double K_prime, double K, double ell, double T, const Schedule& rho);

struct ConeSpec {
    enum class Type { Unconstrained, NonnegativeOrthant, HalfspaceList };
    Type type = Type::Unconstrained;
    /// Rows n_i of {pi : n_i . pi >= 0}; used for HalfspaceList.
    Eigen::MatrixXd normals;
};

struct ConstrainedTheta {
    Eigen::VectorXd theta_hat;
    Eigen::VectorXd v_hat;
    double kkt_residual = 0.0;
    bool degenerate = false;  // theta_hat == 0
};

Eigen::VectorXd market_price_of_risk(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);

/// Minimises |sigma^{-1}(v + mu)|^2 over the polar cone of `cone`.
ConstrainedTheta constrained_theta(const MarketEnvironment& env, const ConeSpec& cone);

struct GrowthReport {
    bool finite = true;
    double required_rho = 0.0;        // infinite horizon threshold (constant coefficients)
    double max_exponent_rate = 0.0;   // sup of the integrand exponent rate on the grid
    double integral = 0.0;            // value of the finiteness integral (finite horizon)
    std::string message;
};

GrowthReport growth_condition_check(const MarketEnvironment& env, double beta, double horizon);

/// rho + lambda pointwise; lambda must be nonnegative.
Schedule mortality_adjusted_discount(const Schedule& rho, const Schedule& hazard);

/// lambda(s) = F'(s) / (1 - F(s)).
double hazard_rate(double density, double cdf);

/// exp(-int_{t0}^{t1} rho).
double discount_factor(const MarketEnvironment& env, double t0, double t1);

/// exp(-int_{t0}^{t1} r).
double interest_discount(const MarketEnvironment& env, double t0, double t1);

/// L(t)/I(t).
double boundary_upper_bound(const IncomeLaborSpec& spec, double t);

}  // namespace retire
