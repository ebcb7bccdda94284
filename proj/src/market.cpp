#include "retire/market.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "retire/error.hpp"
#include "retire/numerics.hpp"

namespace retire {

namespace {

/// int_t0^t1 e^{k s} ds, stable for k -> 0.
double exp_integral(double k, double t0, double t1) {
    const double d = t1 - t0;
    if (std::abs(k * d) < 1e-8) return std::exp(k * t0) * d * (1.0 + 0.5 * k * d);
    return (std::exp(k * t1) - std::exp(k * t0)) / k;
}

}  // namespace

double Schedule::Table::eval(double x) const {
    if (x <= t.front()) return v.front();
    if (x >= t.back()) return v.back();
    const std::size_t i = num::bracket(t, x);
    const double h = t[i + 1] - t[i], s = (x - t[i]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * v[i] + h10 * h * slope[i] + h01 * v[i + 1] + h11 * h * slope[i + 1];
}

Schedule Schedule::constant(double v) {
    Schedule s;
    s.c0_ = v;
    return s;
}

Schedule Schedule::linear(double c0, double c1) {
    Schedule s;
    s.c0_ = c0;
    s.c1_ = c1;
    return s;
}

Schedule Schedule::tabulated(std::vector<double> t, std::vector<double> v) {
    if (t.size() < 2 || t.size() != v.size()) throw ValidationError("schedule table needs matching t and value arrays");
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw ValidationError("schedule times must be strictly increasing");
    const std::size_t n = t.size();
    std::vector<double> delta(n - 1), m(n);
    for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (v[i + 1] - v[i]) / (t[i + 1] - t[i]);
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) m[i] = (delta[i - 1] * delta[i] <= 0.0) ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (delta[i] == 0.0) {
            m[i] = m[i + 1] = 0.0;
            continue;
        }
        const double a = m[i] / delta[i], b = m[i + 1] / delta[i];
        const double r = a * a + b * b;
        if (r > 9.0) {
            const double tau = 3.0 / std::sqrt(r);
            m[i] = tau * a * delta[i];
            m[i + 1] = tau * b * delta[i];
        }
    }
    Schedule s;
    s.tables_.push_back(Table{std::move(t), std::move(v), std::move(m)});
    return s;
}

double Schedule::operator()(double t) const {
    double out = c0_ + c1_ * t;
    for (const auto& tab : tables_) out += tab.eval(t);
    return out;
}

double Schedule::integral(double t0, double t1) const {
    double out = c0_ * (t1 - t0) + 0.5 * c1_ * (t1 * t1 - t0 * t0);
    for (const auto& tab : tables_) out += num::simpson([&](double s) { return tab.eval(s); }, t0, t1, 512);
    return out;
}

double Schedule::min_on(double t0, double t1, int samples) const {
    double lo = (*this)(t0);
    for (int i = 1; i < samples; ++i) lo = std::min(lo, (*this)(t0 + (t1 - t0) * i / (samples - 1)));
    return lo;
}

Schedule Schedule::operator+(const Schedule& other) const {
    Schedule s = *this;
    s.c0_ += other.c0_;
    s.c1_ += other.c1_;
    s.tables_.insert(s.tables_.end(), other.tables_.begin(), other.tables_.end());
    return s;
}

MarketEnvironment MarketEnvironment::make(Schedule r, Schedule rho, Eigen::VectorXd mu, Eigen::MatrixXd sigma,
                                          double T, double T_bar) {
    if (mu.size() == 0 || sigma.rows() != mu.size() || sigma.cols() != mu.size())
        throw ValidationError("sigma must be square with the dimension of mu");
    if (!(T > 0.0)) throw ValidationError("mandatory retirement age T must be positive");
    if (!(T_bar > T)) throw ValidationError("horizon T_bar must exceed T");
    const double span = std::isfinite(T_bar) ? T_bar : T + 100.0;
    if (!(r.min_on(0.0, span) > 0.0)) throw ValidationError("interest rate r must be positive");
    if (!(rho.min_on(0.0, span) > 0.0)) throw ValidationError("discount rate rho must be positive");
    MarketEnvironment env;
    env.r = std::move(r);
    env.rho = std::move(rho);
    env.theta_ = market_price_of_risk(mu, sigma);
    env.mu = std::move(mu);
    env.sigma = std::move(sigma);
    env.T = T;
    env.T_bar = T_bar;
    return env;
}

MarketEnvironment MarketEnvironment::scalar(double r, double rho, double mu, double sigma, double T, double T_bar) {
    return make(Schedule::constant(r), Schedule::constant(rho), Eigen::VectorXd::Constant(1, mu),
                Eigen::MatrixXd::Constant(1, 1, sigma), T, T_bar);
}

MarketEnvironment MarketEnvironment::with_theta(const Eigen::VectorXd& theta_hat) const {
    if (theta_hat.size() != theta_.size()) throw ValidationError("theta dimension mismatch");
    MarketEnvironment env = *this;
    env.theta_ = theta_hat;
    return env;
}

Eigen::VectorXd market_price_of_risk(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sigma);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || !(sv(sv.size() - 1) > 0.0) || sv(0) / sv(sv.size() - 1) > 1e12)
        throw ValidationError("volatility matrix sigma is singular or ill-conditioned");
    return sigma.fullPivLu().solve(mu);
}

ConstrainedTheta constrained_theta(const MarketEnvironment& env, const ConeSpec& cone) {
    const Eigen::Index n = static_cast<Eigen::Index>(env.dim());
    ConstrainedTheta out;
    if (cone.type == ConeSpec::Type::Unconstrained) {
        out.v_hat = Eigen::VectorXd::Zero(n);
        out.theta_hat = env.theta();
        out.degenerate = out.theta_hat.norm() == 0.0;
        return out;
    }
    const Eigen::MatrixXd N = cone.type == ConeSpec::Type::NonnegativeOrthant ? Eigen::MatrixXd::Identity(n, n)
                                                                             : cone.normals;
    if (N.cols() != n || N.rows() == 0) throw ValidationError("cone normals must have one column per asset");
    // v = N^T lambda, lambda >= 0; minimise |A lambda + b|^2 with A = sigma^{-1} N^T, b = theta.
    const Eigen::MatrixXd sinv = env.sigma.inverse();
    const Eigen::MatrixXd A = sinv * N.transpose();
    const Eigen::VectorXd b = env.theta();
    const Eigen::Index m = N.rows();
    auto objective = [&](const Eigen::VectorXd& lam) { return (A * lam + b).squaredNorm(); };

    Eigen::VectorXd best = Eigen::VectorXd::Zero(m);
    if (m <= 4) {
        double best_obj = objective(best);
        for (unsigned mask = 1; mask < (1u << m); ++mask) {
            std::vector<Eigen::Index> idx;
            for (Eigen::Index i = 0; i < m; ++i)
                if (mask & (1u << i)) idx.push_back(i);
            Eigen::MatrixXd As(n, static_cast<Eigen::Index>(idx.size()));
            for (std::size_t j = 0; j < idx.size(); ++j) As.col(static_cast<Eigen::Index>(j)) = A.col(idx[j]);
            const Eigen::VectorXd ls = As.completeOrthogonalDecomposition().solve(-b);
            if ((ls.array() < 0.0).any()) continue;
            Eigen::VectorXd lam = Eigen::VectorXd::Zero(m);
            for (std::size_t j = 0; j < idx.size(); ++j) lam(idx[j]) = ls(static_cast<Eigen::Index>(j));
            const double obj = objective(lam);
            if (obj < best_obj - 1e-15) {
                best_obj = obj;
                best = lam;
            }
        }
    } else {
        const Eigen::MatrixXd Q = A.transpose() * A;
        const Eigen::VectorXd c = A.transpose() * b;
        const double step = 1.0 / std::max(Q.operatorNorm(), 1e-300);
        for (int it = 0; it < 200000; ++it) {
            const Eigen::VectorXd next = (best - step * (Q * best + c)).cwiseMax(0.0);
            if ((next - best).norm() <= 1e-15 * (1.0 + best.norm())) {
                best = next;
                break;
            }
            best = next;
        }
    }
    out.v_hat = N.transpose() * best;
    out.theta_hat = sinv * (out.v_hat + env.mu);
    // KKT: gradient along every generator nonnegative, complementary slackness.
    const Eigen::VectorXd grad = sinv.transpose() * out.theta_hat;
    double resid = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double gi = N.row(i).dot(grad);
        resid = std::max(resid, std::max(-gi, 0.0));
        resid = std::max(resid, std::abs(best(i) * gi));
    }
    out.kkt_residual = resid;
    out.degenerate = out.theta_hat.norm() <= 1e-12 * (1.0 + env.theta().norm());
    if (resid > 1e-8) throw SolverError("cone projection failed KKT certification");
    return out;
}

double IncomeLaborSpec::income(double t) const { return income_scale * C * std::exp(K_prime * t); }

double IncomeLaborSpec::labor(double t) const {
    if (t <= T - ell) return labor_scale * (a0 + a1 * t + 0.5 * a2 * t * t);
    return labor_scale * std::exp(K * t);
}

double IncomeLaborSpec::income_rate(double) const { return K_prime; }

double IncomeLaborSpec::labor_rate(double t) const {
    if (t <= T - ell) return (a1 + a2 * t) / (a0 + a1 * t + 0.5 * a2 * t * t);
    return K;
}

double IncomeLaborSpec::discounted_income(double t, double r) const {
    if (t >= T) return 0.0;
    return income_scale * C * std::exp(r * t) * exp_integral(K_prime - r, t, T);
}

double IncomeLaborSpec::discounted_labor(double t, double rho) const {
    if (t >= T) return 0.0;
    const double knot = T - ell;
    double out = 0.0;
    if (t < knot) {
        // antiderivative of e^{-rho(u-t)} p(u): -e^{-rho(u-t)} (p/rho + p'/rho^2 + p''/rho^3)
        auto F = [&](double u) {
            const double p = a0 + a1 * u + 0.5 * a2 * u * u, dp = a1 + a2 * u, ddp = a2;
            return -std::exp(-rho * (u - t)) * (p / rho + dp / (rho * rho) + ddp / (rho * rho * rho));
        };
        out += F(knot) - F(t);
    }
    const double lo = std::max(t, knot);
    out += std::exp(rho * t) * exp_integral(K - rho, lo, T);
    return labor_scale * out;
}

IncomeLaborSpec IncomeLaborSpec::scaled(double income_factor, double labor_factor) const {
    IncomeLaborSpec s = *this;
    s.income_scale *= income_factor;
    s.labor_scale *= labor_factor;
    return s;
}

IncomeLaborSpec build_income_labor(double C, double K_prime, double K, double ell, double T, const Schedule& rho) {
    std::vector<std::string> errors;
    if (!(C >= 0.0)) errors.push_back("income scale C must be nonnegative");
    if (!(T > 0.0)) errors.push_back("T must be positive");
    if (!(ell > 0.0 && ell < T)) errors.push_back("aged-region length ell must lie in (0, T)");
    if (!(K > 0.0) || !(1.0 / K < T - ell)) errors.push_back("labor-cost growth needs 0 < 1/K < T - ell");
    const double rho_lo = rho.min_on(std::max(T - ell, 0.0), T);
    double rho_hi = rho(std::max(T - ell, 0.0));
    for (int i = 0; i <= 200; ++i) rho_hi = std::max(rho_hi, rho(T - ell + ell * i / 200.0));
    if (!(K_prime < rho_lo)) errors.push_back("income growth K' must be below the discount rate rho");
    if (!(rho_hi < K)) errors.push_back("discount rate rho must be below labor-cost growth K");
    if (!errors.empty()) {
        std::ostringstream msg;
        msg << "invalid income/labor specification:";
        for (const auto& e : errors) msg << " [" << e << "]";
        throw ValidationError(msg.str());
    }
    IncomeLaborSpec s;
    s.C = C;
    s.K_prime = K_prime;
    s.K = K;
    s.ell = ell;
    s.T = T;
    const double d = T - ell, e = std::exp(K * d);
    s.a0 = e * (1.0 - K * d + 0.5 * K * K * d * d);
    s.a1 = K * e * (1.0 - K * d);
    s.a2 = K * K * e;
    return s;
}

GrowthReport growth_condition_check(const MarketEnvironment& env, double beta, double horizon) {
    if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("growth check needs 0 < beta < 1");
    GrowthReport rep;
    const double th2 = env.theta_norm2();
    auto rate = [&](double u) {
        return env.rho(u) / (beta - 1.0) - beta / (beta - 1.0) * env.r(u) +
               0.5 * beta / ((beta - 1.0) * (beta - 1.0)) * th2;
    };
    rep.required_rho = env.r(0.0) * beta + beta / (2.0 * (1.0 - beta)) * th2;
    if (std::isfinite(horizon)) {
        const int n = 400;
        double acc = 0.0, integral = 0.0, prev = 1.0;
        rep.max_exponent_rate = rate(0.0);
        const double h = horizon / n;
        for (int i = 1; i <= n; ++i) {
            const double u0 = (i - 1) * h, u1 = i * h;
            acc += h / 6.0 * (rate(u0) + 4.0 * rate(0.5 * (u0 + u1)) + rate(u1));
            const double cur = std::exp(acc);
            integral += 0.5 * h * (prev + cur);
            prev = cur;
            rep.max_exponent_rate = std::max(rep.max_exponent_rate, rate(u1));
        }
        rep.integral = integral;
        rep.finite = std::isfinite(integral);
        rep.message = rep.finite ? "finite horizon: integral finite" : "finite horizon: integral overflowed";
        return rep;
    }
    rep.max_exponent_rate = rate(0.0);
    for (int i = 1; i <= 1000; ++i) rep.max_exponent_rate = std::max(rep.max_exponent_rate, rate(0.1 * i));
    rep.finite = rep.max_exponent_rate < 0.0;
    rep.integral = rep.finite ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
    std::ostringstream msg;
    msg.precision(6);
    if (rep.finite)
        msg << "infinite horizon: rho exceeds required " << rep.required_rho;
    else
        msg << "infinite horizon: growth condition violated, rho must exceed " << rep.required_rho;
    rep.message = msg.str();
    return rep;
}

Schedule mortality_adjusted_discount(const Schedule& rho, const Schedule& hazard) {
    if (hazard.min_on(0.0, 200.0, 2001) < 0.0) throw ValidationError("hazard rate must be nonnegative");
    return rho + hazard;
}

double hazard_rate(double density, double cdf) {
    if (density < 0.0 || cdf < 0.0 || cdf >= 1.0) throw ValidationError("hazard needs density >= 0 and 0 <= F < 1");
    return density / (1.0 - cdf);
}

double discount_factor(const MarketEnvironment& env, double t0, double t1) {
    if (t1 < t0) throw ValidationError("discount_factor: reversed interval");
    if (t0 == t1) return 1.0;
    if (env.rho.is_constant()) return std::exp(-env.rho(0.0) * (t1 - t0));
    return std::exp(-num::simpson([&](double s) { return env.rho(s); }, t0, t1, 256));
}

double interest_discount(const MarketEnvironment& env, double t0, double t1) {
    if (t1 < t0) throw ValidationError("interest_discount: reversed interval");
    if (env.r.is_constant()) return std::exp(-env.r(0.0) * (t1 - t0));
    return std::exp(-num::simpson([&](double s) { return env.r(s); }, t0, t1, 256));
}

double boundary_upper_bound(const IncomeLaborSpec& spec, double t) {
    const double I = spec.income(t);
    if (I == 0.0) return std::numeric_limits<double>::infinity();
    return spec.labor(t) / I;
}

}  // namespace retire
