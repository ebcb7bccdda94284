#include "retire/post_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "retire/dual_process.hpp"
#include "retire/error.hpp"
#include "retire/numerics.hpp"

namespace retire {

namespace {

using Vec3 = std::array<double, 3>;

/// Moments of log(Y(s)/Y(t)) and the discount factor from t to s.
struct LogMoments {
    double m = 0.0;
    double v = 0.0;
    double disc = 1.0;
};

LogMoments log_moments(const MarketEnvironment& env, double t, double s) {
    const double th2 = env.theta_norm2(), d = s - t;
    LogMoments lm;
    if (env.constant_rates()) {
        const double rho = env.rho(0.0), r = env.r(0.0);
        lm.m = (rho - r - 0.5 * th2) * d;
        lm.disc = std::exp(-rho * d);
    } else {
        const double irho = env.rho.integral(t, s);
        lm.m = irho - env.r.integral(t, s) - 0.5 * th2 * d;
        lm.disc = std::exp(-irho);
    }
    lm.v = th2 * d;
    return lm;
}

bool term_active(const PowerTerm& term, double y) {
    switch (term.support) {
        case PowerTerm::Support::All: return true;
        case PowerTerm::Support::Below: return y < term.cut;
        case PowerTerm::Support::AtOrAbove: return y >= term.cut;
    }
    return true;
}

/// E[coef Y^p 1{support}] with Y = y exp(m + sqrt(v) Z), and its y-derivatives.
Vec3 term_expectation(const PowerTerm& term, double y, double m, double v) {
    const double p = term.power, c = term.coef;
    const double yp = std::pow(y, p);
    const double E = std::exp(p * m + 0.5 * p * p * v);
    if (term.support == PowerTerm::Support::All || v <= 0.0) {
        if (!term_active(term, y * std::exp(m))) return {0.0, 0.0, 0.0};
        return {c * yp * E, c * p * yp / y * E, c * p * (p - 1.0) * yp / (y * y) * E};
    }
    const double sv = std::sqrt(v);
    const double d = (std::log(term.cut / y) - m - p * v) / sv;
    const double sg = term.support == PowerTerm::Support::Below ? 1.0 : -1.0;
    const double Phi = num::normal_cdf(sg * d), ph = num::normal_pdf(d);
    const double first = p * Phi - sg * ph / sv;
    return {c * yp * E * Phi, c * E * yp / y * first,
            c * E * yp / (y * y) * ((p - 1.0) * first - sg * p * ph / sv - sg * d * ph / v)};
}

/// Gauss-Hermite expectation of h(Y) with likelihood-ratio y-derivatives.
Vec3 gh_expectation(const UtilitySpec& spec, double y, double m, double v, std::size_t nodes) {
    if (v <= 0.0) {
        const double yy = y * std::exp(m);
        return {dual_h(yy, spec), -dual_h_neg_derivative(yy, spec), dual_h_second_derivative(yy, spec)};
    }
    const auto& [z, w] = num::gauss_hermite_normal(nodes);
    const double sv = std::sqrt(v);
    Vec3 out{};
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double h = dual_h(y * std::exp(m + sv * z[i]), spec);
        out[0] += w[i] * h;
        out[1] += w[i] * h * z[i] / (y * sv);
        out[2] += w[i] * h * ((z[i] * z[i] - 1.0) / v - z[i] / sv) / (y * y);
    }
    return out;
}

bool use_partial_moments(const UtilitySpec& spec, ExpectationMethod method) {
    if (method == ExpectationMethod::GaussHermite) return false;
    if (spec.dual_terms().empty()) {
        if (method == ExpectationMethod::PartialMoment)
            throw ValidationError("partial-moment expectations need a power-term dual");
        return false;
    }
    return true;
}

Vec3 expectation(const UtilitySpec& spec, double y, const LogMoments& lm, bool partial, std::size_t nodes) {
    if (!partial) return gh_expectation(spec, y, lm.m, lm.v, nodes);
    Vec3 out{};
    for (const auto& term : spec.dual_terms()) {
        const Vec3 e = term_expectation(term, y, lm.m, lm.v);
        for (int k = 0; k < 3; ++k) out[k] += e[k];
    }
    return out;
}

/// int_t^{t+S} e^{-int rho} E[h] ds in the variable u = sqrt(s - t).
Vec3 integrate_horizon(double t, double span, double y, const MarketEnvironment& env, const UtilitySpec& spec,
                       const QuadratureOptions& opts) {
    if (span <= 0.0) return {0.0, 0.0, 0.0};
    const bool partial = use_partial_moments(spec, opts.method);
    auto f = [&](double u) -> Vec3 {
        if (u <= 0.0) return {0.0, 0.0, 0.0};
        const LogMoments lm = log_moments(env, t, t + u * u);
        Vec3 e = expectation(spec, y, lm, partial, opts.gh_nodes);
        const double w = 2.0 * u * lm.disc;
        for (double& x : e) x *= w;
        return e;
    };
    // a tabulated dual is piecewise linear, so Simpson cannot reach tight tolerances
    num::AdaptiveSimpson<3> quad(partial ? opts.rel_tol : std::max(opts.rel_tol, 1e-8),
                                 partial ? opts.abs_tol : std::max(opts.abs_tol, 1e-11), partial ? 30 : 16);
    return quad.integrate(f, 0.0, std::sqrt(span));
}

double kappa(double p, const MarketEnvironment& env) {
    const double rho = env.rho(0.0), r = env.r(0.0), th2 = env.theta_norm2();
    return rho - p * (rho - r) - 0.5 * p * (p - 1.0) * th2;
}

double dual_kink(const UtilitySpec& spec) {
    switch (spec.kind()) {
        case UtilityKind::PowerPair: return spec.envelope().y_bar;
        case UtilityKind::Apy: return std::pow(spec.apy_params().b0, -spec.apy_params().psi);
        case UtilityKind::Tabulated: return envelope_breakpoints(spec).y_bar;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

ValueTriple hatV_quadrature(double t, double y, const MarketEnvironment& env, const UtilitySpec& spec,
                            const QuadratureOptions& opts) {
    if (!(y > 0.0)) throw ValidationError("hatV needs y > 0");
    if (!std::isfinite(env.T_bar)) return infinite_horizon_hatV(y, env, spec, opts.rel_tol).v;
    if (t < 0.0 || t > env.T_bar) throw ValidationError("hatV: t outside [0, T_bar]");
    const Vec3 r = integrate_horizon(t, env.T_bar - t, y, env, spec, opts);
    return {r[0], r[1], r[2]};
}

McEstimate hatV_mc(double t, double y, std::size_t n_samples, std::uint64_t seed, const MarketEnvironment& env,
                   const UtilitySpec& spec, std::size_t n_steps) {
    if (!(y > 0.0)) throw ValidationError("hatV_mc needs y > 0");
    if (!std::isfinite(env.T_bar)) throw ValidationError("hatV_mc needs a finite horizon");
    if (n_samples == 0 || n_steps == 0) throw ValidationError("hatV_mc needs samples and steps");
    if (t >= env.T_bar) return {0.0, 0.0};
    const double ds = (env.T_bar - t) / static_cast<double>(n_steps);
    std::vector<double> disc(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) disc[k] = discount_factor(env, t, t + k * ds);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        PathRng rng(seed, i);
        double yy = y, acc = 0.5 * disc[0] * dual_h(yy, spec);
        for (std::size_t k = 1; k <= n_steps; ++k) {
            yy = exact_step(yy, t + (k - 1) * ds, ds, rng.normal(), env);
            acc += (k == n_steps ? 0.5 : 1.0) * disc[k] * dual_h(yy, spec);
        }
        acc *= ds;
        sum += acc;
        sum2 += acc * acc;
    }
    const double n = static_cast<double>(n_samples);
    const double mean = sum / n;
    const double var = n > 1 ? std::max(sum2 / n - mean * mean, 0.0) * n / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

std::vector<double> post_y_grid(const UtilitySpec& spec, const PostGridConfig& cfg) {
    const double kink = dual_kink(spec);
    const double y_min = std::isfinite(kink) ? cfg.y_min_factor * kink : cfg.y_min_factor;
    if (!(cfg.y_max > y_min) || cfg.n_y < 4) throw ValidationError("post grid needs y_max > y_min and n_y >= 4");
    std::vector<double> grid = num::logspace(y_min, cfg.y_max, cfg.n_y);
    if (std::isfinite(kink) && kink > y_min && kink < cfg.y_max) num::insert_sorted(grid, kink, 1e-12);
    return grid;
}

ValueSurface build_post_surface(const MarketEnvironment& env, const UtilitySpec& spec, const PostGridConfig& cfg) {
    const std::vector<double> ys = post_y_grid(spec, cfg);
    std::vector<double> ts;
    if (std::isfinite(env.T_bar)) {
        if (cfg.n_t < 2) throw ValidationError("post grid needs n_t >= 2");
        ts = num::linspace(0.0, env.T_bar, cfg.n_t);
    } else {
        ts = {0.0};
    }
    const std::size_t nt = ts.size(), ny = ys.size();
    std::vector<double> v(nt * ny), dy(nt * ny), dyy(nt * ny);
    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            for (std::size_t j = 0; j < ny; ++j) {
                const ValueTriple q = hatV_quadrature(ts[i], ys[j], env, spec, cfg.quad);
                v[i * ny + j] = q.value;
                dy[i * ny + j] = q.dy;
                dyy[i * ny + j] = q.dyy;
            }
        }
    };
    const unsigned threads = std::max(1u, cfg.threads);
    if (threads == 1) {
        work(0, nt);
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < threads; ++k) {
            // interleaved rows balance the shrinking horizon
            pool.emplace_back([&, k] {
                for (std::size_t i = k; i < nt; i += threads) work(i, i + 1);
            });
        }
        for (auto& th : pool) th.join();
    }
    return ValueSurface(std::move(ts), ys, std::move(v), std::move(dy), std::move(dyy), "quadrature");
}

PostValue::PostValue(std::shared_ptr<const ValueSurface> surface, MarketEnvironment env, UtilitySpec spec,
                     QuadratureOptions opts)
    : surface_(std::move(surface)), env_(std::move(env)), spec_(std::move(spec)), opts_(opts) {
    if (!surface_) throw ValidationError("PostValue needs a surface");
}

ValueTriple PostValue::eval(double t, double y) const {
    if (surface_->contains(t, y)) return surface_->eval(t, y);
    if (std::isfinite(env_.T_bar) && t >= env_.T_bar) return {};
    return hatV_quadrature(std::min(t, env_.T_bar), y, env_, spec_, opts_);
}

DerivativeReport hatV_derivatives(const ValueSurface& surface, double t, double y) {
    DerivativeReport rep;
    const ValueTriple q = surface.eval(t, y);
    rep.dy = q.dy;
    rep.dyy = q.dyy;
    const auto& ys = surface.y();
    const std::size_t j = num::bracket(ys, y);
    const double h = 0.25 * (ys[j + 1] - ys[j]);
    rep.edge = (y - 2 * h < ys.front()) || (y + 2 * h > ys.back());
    if (rep.edge) return rep;
    const double fm2 = surface.eval(t, y - 2 * h).value, fm1 = surface.eval(t, y - h).value;
    const double fp1 = surface.eval(t, y + h).value, fp2 = surface.eval(t, y + 2 * h).value;
    rep.dy_fd = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h);
    rep.dyy_fd = (-fm2 + 16 * fm1 - 30 * q.value + 16 * fp1 - fp2) / (12 * h * h);
    rep.rel_gap = std::max(std::abs(rep.dy - rep.dy_fd) / std::max(std::abs(rep.dy), 1e-300),
                           std::abs(rep.dyy - rep.dyy_fd) / std::max(std::abs(rep.dyy), 1e-300));
    return rep;
}

PrimalResult primal_value(const DualValue& dual, const std::vector<double>& y_grid, double t, double x) {
    if (!(x > 0.0)) throw ValidationError("primal_value needs x > 0");
    if (y_grid.size() < 3) throw ValidationError("primal_value needs a y-grid with at least 3 points");
    auto f = [&](double y) { return dual.eval(t, y).value + x * y; };
    std::size_t best = 0;
    double best_v = f(y_grid[0]);
    for (std::size_t j = 1; j < y_grid.size(); ++j) {
        const double v = f(y_grid[j]);
        if (v < best_v) {
            best_v = v;
            best = j;
        }
    }
    PrimalResult res;
    res.on_edge = best == 0 || best + 1 == y_grid.size();
    const double lo = y_grid[best == 0 ? 0 : best - 1];
    const double hi = y_grid[std::min(best + 1, y_grid.size() - 1)];
    const double y = num::golden_section_min(f, lo, hi, 1e-14);
    res.y_opt = f(y) <= best_v ? y : y_grid[best];
    res.value = std::min(f(y), best_v);
    return res;
}

StrategyPoint post_strategy(const DualValue& dual, double t, double y, const MarketEnvironment& env,
                            const UtilitySpec& spec) {
    if (!(y > 0.0)) throw ValidationError("post_strategy needs y > 0");
    const ValueTriple q = dual.eval(t, y);
    StrategyPoint s;
    s.X = -q.dy;
    s.pi = env.sigma.transpose().fullPivLu().solve(env.theta()) * (y * q.dyy);
    s.pi_total = s.pi.sum();
    const ConsumptionSplit cg = split_from_dual(y, spec);
    s.c = cg.c;
    s.g = cg.g;
    s.k = dual_h_neg_derivative(y, spec);
    return s;
}

double stationary_residual(const ValueTriple& v, double y, const MarketEnvironment& env, const UtilitySpec& spec) {
    const double rho = env.rho(0.0), r = env.r(0.0);
    return 0.5 * env.theta_norm2() * y * y * v.dyy + (rho - r) * y * v.dy - rho * v.value + dual_h(y, spec);
}

ApyClosedForm apy_closed_form(double y, const ApyParams& p, const MarketEnvironment& env) {
    if (!(y > 0.0)) throw ValidationError("apy_closed_form needs y > 0");
    if (!env.constant_rates()) throw ValidationError("apy_closed_form needs constant coefficients");
    const double rho = env.rho(0.0), r = env.r(0.0), th2 = env.theta_norm2();
    const double phi = p.phi, psi = p.psi;
    const double den1 = 0.5 * th2 * (1.0 - phi) - rho * phi - r * (phi * phi - phi);
    const double den4 = 0.5 * th2 * (1.0 - psi) - rho * psi - r * (psi * psi - psi);
    if (std::abs(den1) < 1e-14 || std::abs(den4) < 1e-14)
        throw SolverError("apy_closed_form: vanishing denominator in the power coefficients");
    ApyClosedForm out;
    auto& C = out.C;
    C[0] = -phi / (1.0 - phi) * phi * phi / den1;
    C[1] = -p.c0 / r;
    C[2] = std::pow(p.b0, 1.0 - psi) / (rho * (1.0 - psi));
    C[3] = -psi / (1.0 - psi) * psi * psi / den4;
    C[4] = p.b0 / r;
    C[5] = -C[2];
    out.kink = std::pow(p.b0, -psi);
    const double e1 = 1.0 - 1.0 / phi, e4 = 1.0 - 1.0 / psi;
    ValueTriple& v = out.v;
    v.value = C[0] * std::pow(y, e1) + C[1] * y + C[2];
    v.dy = C[0] * e1 * std::pow(y, e1 - 1.0) + C[1];
    v.dyy = C[0] * e1 * (e1 - 1.0) * std::pow(y, e1 - 2.0);
    if (y < out.kink) {
        v.value += C[3] * std::pow(y, e4) + C[4] * y + C[5];
        v.dy += C[3] * e4 * std::pow(y, e4 - 1.0) + C[4];
        v.dyy += C[3] * e4 * (e4 - 1.0) * std::pow(y, e4 - 2.0);
    }
    return out;
}

ApySmoothFit apy_smooth_fit(const ApyParams& p, const MarketEnvironment& env) {
    if (!env.constant_rates()) throw ValidationError("apy_smooth_fit needs constant coefficients");
    const double rho = env.rho(0.0), r = env.r(0.0), th2 = env.theta_norm2();
    if (!(th2 > 0.0)) throw ValidationError("apy_smooth_fit needs a nonzero market price of risk");
    const double qa = 0.5 * th2, qb = rho - r - 0.5 * th2, qc = -rho;
    const double disc = std::sqrt(qb * qb - 4.0 * qa * qc);
    ApySmoothFit fit;
    fit.n_plus = (-qb + disc) / (2.0 * qa);
    fit.n_minus = (-qb - disc) / (2.0 * qa);
    fit.kink = std::pow(p.b0, -p.psi);
    const double y0 = fit.kink;
    // jump of the right piece over the left piece at the kink
    const ApyClosedForm right = apy_closed_form(y0, p, env);
    const double e4 = 1.0 - 1.0 / p.psi;
    const double D = -(right.C[3] * std::pow(y0, e4) + right.C[4] * y0 + right.C[5]);
    const double Dp = -(right.C[3] * e4 * std::pow(y0, e4 - 1.0) + right.C[4]);
    const double a = (Dp * y0 - fit.n_minus * D) / (fit.n_plus - fit.n_minus);
    const double b = a - D;
    fit.A = a / std::pow(y0, fit.n_plus);
    fit.B = b / std::pow(y0, fit.n_minus);
    return fit;
}

ValueTriple apy_smooth_fit_value(double y, const ApyParams& p, const MarketEnvironment& env) {
    const ApySmoothFit fit = apy_smooth_fit(p, env);
    ValueTriple v = apy_closed_form(y, p, env).v;
    const double n = y < fit.kink ? fit.n_plus : fit.n_minus;
    const double c = y < fit.kink ? fit.A : fit.B;
    const double yn = std::pow(y, n);
    v.value += c * yn;
    v.dy += c * n * yn / y;
    v.dyy += c * n * (n - 1.0) * yn / (y * y);
    return v;
}

InfiniteHorizonResult infinite_horizon_hatV(double y, const MarketEnvironment& env, const UtilitySpec& spec,
                                            double rel_tol) {
    if (!(y > 0.0)) throw ValidationError("infinite_horizon_hatV needs y > 0");
    if (!env.constant_rates()) throw ValidationError("infinite horizon value needs constant coefficients");
    const auto& terms = spec.dual_terms();
    if (terms.empty()) throw ValidationError("infinite horizon value needs a power-term dual");
    const double rho = env.rho(0.0);
    // Per-term tail majorant c_i e^{-k_i s}: bounded terms decay at rho, unbounded at kappa(p).
    std::vector<std::pair<double, double>> majorants;
    double scale = 0.0;
    for (const auto& term : terms) {
        const double p = term.power, c = std::abs(term.coef);
        const bool bounded = p == 0.0 || (term.support == PowerTerm::Support::Below && p > 0.0) ||
                             (term.support == PowerTerm::Support::AtOrAbove && p < 0.0);
        if (bounded) {
            majorants.emplace_back(c * (p == 0.0 ? 1.0 : std::pow(term.cut, p)), rho);
        } else {
            const double k = kappa(p, env);
            if (!(k > 0.0)) throw ValidationError("growth condition violated: infinite-horizon value is not finite");
            majorants.emplace_back(c * std::pow(y, p), k);
        }
        scale += majorants.back().first / majorants.back().second;
    }
    const double target = std::max(rel_tol * scale, 1e-300);
    double S = 1.0;
    for (const auto& [c, k] : majorants) S = std::max(S, std::log(std::max(c / (k * target), 1.0)) / k);
    S = std::min(S, 1e6);
    double tail = 0.0;
    for (const auto& [c, k] : majorants) tail += c * std::exp(-k * S) / k;
    MarketEnvironment finite = env;
    finite.T_bar = S;
    QuadratureOptions opts;
    opts.rel_tol = rel_tol;
    opts.abs_tol = 1e-3 * target;
    const Vec3 v = integrate_horizon(0.0, S, y, finite, spec, opts);
    InfiniteHorizonResult res;
    res.v = {v[0], v[1], v[2]};
    res.tail_bound = tail;
    res.horizon = S;
    return res;
}

double pension_adjusted_wealth(double x, double tau, const Schedule& pension, const MarketEnvironment& env) {
    if (!std::isfinite(env.T_bar)) throw ValidationError("pension adjustment needs a finite horizon");
    if (tau > env.T_bar) throw ValidationError("pension adjustment needs tau <= T_bar");
    if (tau == env.T_bar) return x;
    if (pension.is_constant() && env.r.is_constant()) {
        const double p = pension(0.0), r = env.r(0.0);
        return x + p * (1.0 - std::exp(-r * (env.T_bar - tau))) / r;
    }
    return x + num::simpson([&](double s) { return interest_discount(env, tau, s) * pension(s); }, tau, env.T_bar,
                            512);
}

}  // namespace retire
