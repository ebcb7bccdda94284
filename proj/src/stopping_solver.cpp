#include "retire/stopping_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "retire/error.hpp"
#include "retire/numerics.hpp"

namespace retire {

namespace {

/// int_t^T e^{-int_t^u r} I(u) du and int_t^T e^{-int_t^u rho} L(u) du.
std::pair<double, double> remaining_flows(const MarketEnvironment& env, const IncomeLaborSpec& inc, double t) {
    if (t >= inc.T) return {0.0, 0.0};
    if (env.constant_rates()) return {inc.discounted_income(t, env.r(0.0)), inc.discounted_labor(t, env.rho(0.0))};
    const double A = num::simpson([&](double u) { return interest_discount(env, t, u) * inc.income(u); }, t, inc.T, 256);
    const double B = num::simpson([&](double u) { return discount_factor(env, t, u) * inc.labor(u); }, t, inc.T, 256);
    return {A, B};
}

/// Coefficients of the monotone three-point stencil at y: W_t + up (W+ - W) + dn (W- - W).
struct Stencil {
    double up = 0.0;
    double dn = 0.0;
};

Stencil stencil(double th2, double drift, double y, double dy) {
    const double a = 0.5 * th2 * y * y / (dy * dy);
    const double b = drift * y;
    if (a >= std::abs(b) / (2.0 * dy)) return {a + b / (2.0 * dy), a - b / (2.0 * dy)};
    if (b > 0.0) return {a + b / dy, a};
    return {a, a - b / dy};
}

double rate_gap(const MarketEnvironment& env, double t) { return env.rho(t) - env.r(t); }

/// First index with value above eps, verifying the exercise set is a prefix.
std::size_t first_positive(std::span<const double> row, double eps) {
    std::size_t j = 0;
    while (j < row.size() && row[j] <= eps) ++j;
    for (std::size_t k = j; k < row.size(); ++k)
        if (row[k] <= eps) throw SolverError("non-monotone exercise mask in y: stopping solver produced an invalid row");
    return j;
}

/// Boundary inside [nodes[j-1], nodes[j]] from a linear fit of sqrt(W).
double refine_boundary(const std::vector<double>& nodes, std::span<const double> row, std::size_t j) {
    const double lo = nodes[j - 1], hi = nodes[j];
    if (j + 1 >= row.size()) return lo;
    const double s1 = std::sqrt(row[j]), s2 = std::sqrt(row[j + 1]);
    if (!(s2 > s1)) return lo;
    const double b = nodes[j] - s1 * (nodes[j + 1] - nodes[j]) / (s2 - s1);
    return std::clamp(b, lo, hi);
}

}  // namespace

double explicit_step_bound(const MarketEnvironment& env, double t, const StoppingGridConfig& cfg) {
    const double dy = cfg.y_max / static_cast<double>(cfg.n_y);
    return dy * dy / (env.theta_norm2() * cfg.y_max * cfg.y_max + std::abs(rate_gap(env, t)) * cfg.y_max * dy);
}

double stopping_payoff(const MarketEnvironment& env, const IncomeLaborSpec& inc, double t, double y) {
    return discount_factor(env, 0.0, t) * (y * inc.income(t) - inc.labor(t));
}

double continue_to_T(const MarketEnvironment& env, const IncomeLaborSpec& inc, double t, double y) {
    const auto [A, B] = remaining_flows(env, inc, t);
    return discount_factor(env, 0.0, t) * std::max(0.0, y * A - B);
}

StoppingSurface solve_vi_fdm(const MarketEnvironment& env, const IncomeLaborSpec& inc, const StoppingGridConfig& cfg) {
    if (cfg.n_y < 3 || cfg.n_t < 1) throw ValidationError("stopping grid needs n_y >= 3 and n_t >= 1");
    if (!(cfg.y_max > 0.0)) throw ValidationError("stopping grid needs y_max > 0");
    if (std::abs(inc.T - env.T) > 1e-12) throw ValidationError("income/labor T differs from the market T");
    const std::size_t nt = cfg.n_t, ny = cfg.n_y;
    StoppingSurface s;
    s.t = num::linspace(0.0, env.T, nt + 1);
    s.y = num::linspace(0.0, cfg.y_max, ny + 1);
    s.dt = env.T / static_cast<double>(nt);
    s.dy = cfg.y_max / static_cast<double>(ny);
    s.W.assign((nt + 1) * (ny + 1), 0.0);
    s.exercise.assign((nt + 1) * (ny + 1), 1);
    const double th2 = env.theta_norm2();
    const bool explicit_scheme = cfg.scheme == StoppingGridConfig::Scheme::Explicit;
    s.scheme = explicit_scheme ? "explicit" : "implicit-psor";

    if (!inc.income_vanishes()) {
        for (std::size_t i = 0; i < nt; ++i) {
            const auto [A, B] = remaining_flows(env, inc, s.t[i]);
            if (cfg.y_max * A < B) {
                std::ostringstream msg;
                msg << "y_max=" << cfg.y_max << " too small: continuation value at y_max is negative at t=" << s.t[i];
                throw SolverError(msg.str());
            }
        }
    }

    s.cfl_dt = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i <= nt; ++i) s.cfl_dt = std::min(s.cfl_dt, explicit_step_bound(env, s.t[i], cfg));
    if (explicit_scheme && s.dt > s.cfl_dt) {
        if (cfg.strict_cfl) {
            std::ostringstream msg;
            msg << "explicit scheme violates the stability bound: dt=" << s.dt << " > " << s.cfl_dt;
            throw SolverError(msg.str());
        }
        s.substeps = static_cast<int>(std::ceil(s.dt / s.cfl_dt * (1.0 + 1e-12)));
    }

    std::vector<double> cur(ny + 1, 0.0), nxt(ny + 1, 0.0), f(ny + 1, 0.0);
    std::vector<Stencil> st(ny + 1);
    const double h = s.dt / s.substeps;
    for (std::size_t ii = nt; ii-- > 0;) {
        for (int sub = 0; sub < s.substeps; ++sub) {
            const double tau = s.t[ii + 1] - sub * h;  // time of `cur`
            const double tnew = (sub + 1 == s.substeps) ? s.t[ii] : tau - h;
            const double tf = explicit_scheme ? tau : tnew;
            const double drift = rate_gap(env, tf);
            const double disc = discount_factor(env, 0.0, tf);
            const double I = inc.income(tf), L = inc.labor(tf);
            for (std::size_t j = 1; j < ny; ++j) {
                st[j] = stencil(th2, drift, s.y[j], s.dy);
                f[j] = disc * (s.y[j] * I - L);
            }
            nxt[0] = 0.0;
            nxt[ny] = continue_to_T(env, inc, tnew, cfg.y_max);
            if (explicit_scheme) {
                for (std::size_t j = 1; j < ny; ++j) {
                    const double v = cur[j] + h * (st[j].up * (cur[j + 1] - cur[j]) + st[j].dn * (cur[j - 1] - cur[j]) + f[j]);
                    nxt[j] = std::max(v, 0.0);
                }
            } else {
                for (std::size_t j = 1; j < ny; ++j) nxt[j] = cur[j];
                double scale = 0.0;
                for (std::size_t j = 1; j < ny; ++j) scale = std::max(scale, std::abs(cur[j]) + h * std::abs(f[j]));
                scale = std::max(scale, 1e-300);
                int it = 0;
                for (; it < cfg.psor_max_iter; ++it) {
                    double change = 0.0;
                    for (std::size_t j = 1; j < ny; ++j) {
                        const double diag = 1.0 + h * (st[j].up + st[j].dn);
                        const double gs = (cur[j] + h * f[j] + h * st[j].up * nxt[j + 1] + h * st[j].dn * nxt[j - 1]) / diag;
                        const double v = std::max(0.0, nxt[j] + cfg.psor_omega * (gs - nxt[j]));
                        change = std::max(change, std::abs(v - nxt[j]));
                        nxt[j] = v;
                    }
                    if (change <= cfg.psor_tol * scale) break;
                }
                if (it == cfg.psor_max_iter) throw SolverError("PSOR did not converge");
            }
            std::swap(cur, nxt);
        }
        for (std::size_t j = 0; j <= ny; ++j) {
            s.W[ii * (ny + 1) + j] = cur[j];
            s.exercise[ii * (ny + 1) + j] = cur[j] <= 0.0 ? 1 : 0;
        }
    }
    return s;
}

double FreeBoundary::at(double time) const {
    if (t.empty()) throw ValidationError("empty free boundary");
    if (time <= t.front()) return b.front();
    if (time >= t.back()) return b.back();
    const std::size_t i = num::bracket(t, time);
    const double w = (time - t[i]) / (t[i + 1] - t[i]);
    return (1.0 - w) * b[i] + w * b[i + 1];
}

FreeBoundary extract_boundary(const StoppingSurface& surface, const IncomeLaborSpec& inc) {
    const std::size_t nrows = surface.t.size();
    if (nrows < 2) throw ValidationError("stopping surface has no interior rows");
    double wmax = 0.0;
    for (double w : surface.W) wmax = std::max(wmax, std::abs(w));
    const double eps = 1e-10 * wmax;
    FreeBoundary fb;
    fb.dy = surface.dy;
    fb.T = surface.t.back();
    for (std::size_t i = 0; i + 1 < nrows; ++i) {
        const auto row = surface.row(i);
        const std::size_t j = first_positive(row, eps);
        double b;
        if (j >= row.size())
            b = surface.y.back();
        else
            b = refine_boundary(surface.y, row, j);
        fb.t.push_back(surface.t[i]);
        fb.b.push_back(b);
        fb.upper.push_back(boundary_upper_bound(inc, surface.t[i]));
    }
    const double aged = inc.T - inc.ell;
    for (std::size_t i = 0; i + 1 < fb.t.size(); ++i)
        if (fb.t[i] >= aged - 1e-12 && fb.b[i + 1] < fb.b[i] - fb.dy) ++fb.monotone_violations;
    fb.terminal = fb.b.back();
    fb.terminal_target = boundary_upper_bound(inc, inc.T);
    return fb;
}

ObstacleReport check_obstacle(const StoppingSurface& s, const MarketEnvironment& env, const IncomeLaborSpec& inc) {
    ObstacleReport rep;
    const std::size_t ny = s.ny(), nt = s.t.size();
    double wmax = 0.0, fmax = 0.0;
    for (double w : s.W) {
        wmax = std::max(wmax, std::abs(w));
        rep.min_value = std::min(rep.min_value, w);
    }
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < ny; ++j) fmax = std::max(fmax, std::abs(stopping_payoff(env, inc, s.t[i], s.y[j])));
    fmax = std::max(fmax, 1e-300);
    const double eps = 1e-10 * wmax;
    const double th2 = env.theta_norm2();
    for (std::size_t i = 0; i + 1 < nt; ++i) {
        const double t = s.t[i];
        for (std::size_t j = 1; j + 1 < ny; ++j) {
            const Stencil c = stencil(th2, rate_gap(env, t), s.y[j], s.dy);
            const double w = s.at(i, j);
            const double res = -(s.at(i + 1, j) - w) / s.dt -
                               (c.up * (s.at(i, j + 1) - w) + c.dn * (s.at(i, j - 1) - w)) -
                               stopping_payoff(env, inc, t, s.y[j]);
            if (w > eps) rep.max_residual = std::max(rep.max_residual, std::abs(res) / fmax);
            rep.max_complementarity = std::max(rep.max_complementarity, std::abs(w * res) / (fmax * std::max(wmax, 1e-300)));
        }
    }
    for (std::size_t i = 0; i < nt; i += 10)
        for (std::size_t j = 0; j + 1 < ny; ++j)
            if (s.at(i, j + 1) < s.at(i, j) - 1e-13 * wmax) ++rep.monotone_y_violations;
    return rep;
}

namespace {

void derivative_tables(const StoppingSurface& s, std::vector<double>& d1, std::vector<double>& d2) {
    const std::size_t nt = s.t.size(), ny = s.ny();
    d1.assign(nt * ny, 0.0);
    d2.assign(nt * ny, 0.0);
    const double dy = s.dy;
    for (std::size_t i = 0; i < nt; ++i) {
        const double* w = s.W.data() + i * ny;
        double* a = d1.data() + i * ny;
        double* b = d2.data() + i * ny;
        for (std::size_t j = 1; j + 1 < ny; ++j) {
            a[j] = (w[j + 1] - w[j - 1]) / (2.0 * dy);
            b[j] = (w[j + 1] - 2.0 * w[j] + w[j - 1]) / (dy * dy);
        }
        a[0] = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dy);
        a[ny - 1] = (3.0 * w[ny - 1] - 4.0 * w[ny - 2] + w[ny - 3]) / (2.0 * dy);
        b[0] = b[1];
        b[ny - 1] = b[ny - 2];
    }
}

}  // namespace

ValueSurface stopping_value_surface(const StoppingSurface& s) {
    std::vector<double> d1, d2;
    derivative_tables(s, d1, d2);
    return ValueSurface(s.t, s.y, s.W, std::move(d1), std::move(d2), s.scheme);
}

PreValue::PreValue(std::shared_ptr<const DualValue> post, std::shared_ptr<const StoppingSurface> stop,
                   MarketEnvironment env, IncomeLaborSpec inc)
    : post_(std::move(post)), stop_(std::move(stop)), env_(std::move(env)), inc_(std::move(inc)) {
    if (!post_ || !stop_) throw ValidationError("PreValue needs post and stopping surfaces");
    const StoppingSurface& s = *stop_;
    const std::size_t nt = s.t.size(), ny = s.ny();
    std::vector<double> d1, d2;
    derivative_tables(s, d1, d2);
    double wmax = 0.0;
    for (double w : s.W) wmax = std::max(wmax, std::abs(w));
    const double eps = 1e-10 * wmax;
    edges_.assign(nt, RowEdge{});
    for (std::size_t i = 0; i + 1 < nt; ++i) {
        const auto row = s.row(i);
        const std::size_t j = first_positive(row, eps);
        if (j == 0 || j + 1 >= ny) continue;
        // W = c (y - b)^2 on (b, y_j), with b shared with extract_boundary
        RowEdge& e = edges_[i];
        e.j = j;
        e.b = refine_boundary(s.y, row, j);
        e.c = row[j] / ((s.y[j] - e.b) * (s.y[j] - e.b));
        for (std::size_t k = 0; k < j; ++k) d1[i * ny + k] = d2[i * ny + k] = 0.0;
        d1[i * ny + j] = 2.0 * e.c * (s.y[j] - e.b);
        d2[i * ny + j] = 2.0 * e.c;
    }
    w_ = ValueSurface(s.t, s.y, s.W, std::move(d1), std::move(d2), s.scheme);
}

ValueTriple PreValue::row_part(std::size_t i, double y) const {
    const RowEdge& e = edges_[i];
    if (e.j == 0) return w_.eval_row(i, y);
    if (y <= e.b) return {};
    if (y < stop_->y[e.j]) {
        const double u = y - e.b;
        return {e.c * u * u, 2.0 * e.c * u, 2.0 * e.c};
    }
    return w_.eval_row(i, y);
}

ValueTriple PreValue::stopping_part(double t, double y) const {
    if (t >= env_.T) return {};
    const double grow = 1.0 / discount_factor(env_, 0.0, t);
    ValueTriple w;
    if (y <= stop_->y.back()) {
        const auto& ts = stop_->t;
        const double tc = std::max(t, ts.front());
        const std::size_t i = num::bracket(ts, tc);
        const double a = (tc - ts[i]) / (ts[i + 1] - ts[i]);
        const ValueTriple lo = row_part(i, y);
        const ValueTriple hi = a > 0.0 ? row_part(i + 1, y) : ValueTriple{};
        w = {(1 - a) * lo.value + a * hi.value, (1 - a) * lo.dy + a * hi.dy, (1 - a) * lo.dyy + a * hi.dyy};
    } else {
        const auto [A, B] = remaining_flows(env_, inc_, t);
        const double disc = discount_factor(env_, 0.0, t);
        if (y * A > B) w = {disc * (y * A - B), disc * A, 0.0};
    }
    return {grow * w.value, grow * w.dy, grow * w.dyy};
}

ValueTriple PreValue::eval(double t, double y) const {
    ValueTriple v = post_->eval(t, y);
    const ValueTriple w = stopping_part(t, y);
    v.value += w.value;
    v.dy += w.dy;
    v.dyy += w.dyy;
    return v;
}

std::shared_ptr<PreValue> assemble_pre_value(std::shared_ptr<const StoppingSurface> stop,
                                             std::shared_ptr<const DualValue> post, const MarketEnvironment& env,
                                             const IncomeLaborSpec& inc) {
    return std::make_shared<PreValue>(std::move(post), std::move(stop), env, inc);
}

PreValueReport check_pre_value(const PreValue& pre, const FreeBoundary& boundary, std::size_t n_rows) {
    PreValueReport rep;
    const auto& s = pre.stopping();
    const std::size_t nt = s.t.size();
    rep.min_excess = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_rows; ++k) {
        const std::size_t i = (nt - 2) * k / std::max<std::size_t>(n_rows - 1, 1);
        const double t = s.t[i];
        std::vector<double> vals;
        for (std::size_t j = 1; j < s.ny(); ++j) {
            const double y = s.y[j];
            const ValueTriple w = pre.eval(t, y);
            const ValueTriple v = pre.post().eval(t, y);
            rep.min_excess = std::min(rep.min_excess, w.value - v.value);
            vals.push_back(w.value);
        }
        for (std::size_t j = 1; j + 1 < vals.size(); ++j) {
            const double scale = std::abs(vals[j - 1]) + std::abs(vals[j + 1]);
            if (vals[j + 1] - 2.0 * vals[j] + vals[j - 1] < -1e-9 * scale) ++rep.convexity_violations;
        }
        for (std::size_t j = 0; j + 1 < vals.size(); ++j)
            if (vals[j + 1] >= vals[j]) ++rep.monotone_violations;
        const double b = boundary.b[i];
        const double d = 1e-3 * s.dy;
        if (b - 2 * d > 0.0 && b + 2 * d < s.y.back()) {
            auto f = [&](double y) { return pre.eval(t, y).value; };
            const double left = (3 * f(b) - 4 * f(b - d) + f(b - 2 * d)) / (2 * d);
            const double right = (-3 * f(b) + 4 * f(b + d) - f(b + 2 * d)) / (2 * d);
            rep.max_smooth_fit_gap = std::max(rep.max_smooth_fit_gap, std::abs(right - left));
        }
    }
    for (std::size_t j = 1; j < s.ny(); ++j) {
        const double y = s.y[j];
        const double T = s.t.back();
        rep.terminal_gap = std::max(rep.terminal_gap, std::abs(pre.eval(T, y).value - pre.post().eval(T, y).value));
    }
    return rep;
}

PreStrategy pre_strategy(const PreValue& pre, const FreeBoundary& boundary, double t, double y,
                         const MarketEnvironment& env, const UtilitySpec& spec) {
    PreStrategy out;
    if (t >= env.T || y <= boundary.at(t)) {
        out.retired_region = true;
        out.point = post_strategy(pre.post(), t, y, env, spec);
        return out;
    }
    out.point = post_strategy(pre, t, y, env, spec);
    return out;
}

double TreeResult::value(std::size_t i, double y) const {
    const std::size_t nx = x.size();
    const double lx = std::log(y);
    if (lx <= x.front()) return W[i * nx];
    if (lx >= x.back()) return W[i * nx + nx - 1];
    const std::size_t k = num::bracket(x, lx);
    const double w = (lx - x[k]) / dx;
    return (1.0 - w) * W[i * nx + k] + w * W[i * nx + k + 1];
}

TreeResult tree_oracle(const MarketEnvironment& env, const IncomeLaborSpec& inc, std::size_t n_time_steps,
                       double y_lo, double y_hi) {
    if (!env.constant_rates()) throw ValidationError("tree oracle needs constant coefficients");
    if (n_time_steps < 1 || !(y_hi > y_lo) || !(y_lo > 0.0)) throw ValidationError("invalid tree configuration");
    const double th2 = env.theta_norm2();
    if (!(th2 > 0.0)) throw ValidationError("tree oracle needs a nonzero market price of risk");
    TreeResult tr;
    const double dt = env.T / static_cast<double>(n_time_steps);
    tr.t = num::linspace(0.0, env.T, n_time_steps + 1);
    tr.dx = std::sqrt(3.0 * th2 * dt);
    const double x_lo = std::log(y_lo);
    const std::size_t K = static_cast<std::size_t>(std::ceil((std::log(y_hi) - x_lo) / tr.dx));
    tr.x.resize(K + 1);
    for (std::size_t k = 0; k <= K; ++k) tr.x[k] = x_lo + static_cast<double>(k) * tr.dx;
    const double rho = env.rho(0.0), r = env.r(0.0);
    const double nu = rho - r - 0.5 * th2;
    const double m2 = (th2 * dt + nu * nu * dt * dt) / (tr.dx * tr.dx);
    const double pu = 0.5 * m2 + 0.5 * nu * dt / tr.dx, pd = 0.5 * m2 - 0.5 * nu * dt / tr.dx;
    const double pm = 1.0 - pu - pd;
    if (pu < 0.0 || pd < 0.0 || pm < 0.0) throw SolverError("tree probabilities are not positive; refine the step");
    const std::size_t nx = K + 1;
    tr.W.assign((n_time_steps + 1) * nx, 0.0);
    std::vector<double> y(nx);
    for (std::size_t k = 0; k < nx; ++k) y[k] = std::exp(tr.x[k]);
    for (std::size_t ii = n_time_steps; ii-- > 0;) {
        const double t0 = tr.t[ii], t1 = tr.t[ii + 1], tm = 0.5 * (t0 + t1);
        const double d0 = std::exp(-rho * t0), dm = std::exp(-rho * tm), d1 = std::exp(-rho * t1);
        const double gm = std::exp((rho - r) * 0.5 * dt), g1 = std::exp((rho - r) * dt);
        const double* next = tr.W.data() + (ii + 1) * nx;
        double* cur = tr.W.data() + ii * nx;
        for (std::size_t k = 1; k + 1 < nx; ++k) {
            // exact expectation of the running payoff over the step (linear in Y)
            const double run = dt / 6.0 *
                               (d0 * (y[k] * inc.income(t0) - inc.labor(t0)) +
                                4.0 * dm * (y[k] * gm * inc.income(tm) - inc.labor(tm)) +
                                d1 * (y[k] * g1 * inc.income(t1) - inc.labor(t1)));
            cur[k] = std::max(0.0, run + pu * next[k + 1] + pm * next[k] + pd * next[k - 1]);
        }
        cur[0] = 0.0;
        cur[nx - 1] = continue_to_T(env, inc, t0, y[nx - 1]);
    }
    double wmax = 0.0;
    for (double w : tr.W) wmax = std::max(wmax, w);
    const double eps = 1e-10 * wmax;
    for (std::size_t i = 0; i < n_time_steps; ++i) {
        const std::span<const double> row(tr.W.data() + i * nx, nx);
        const std::size_t j = first_positive(row, eps);
        if (j >= nx) {
            tr.b.push_back(y_hi);
        } else if (j == 0) {
            tr.b.push_back(y_lo);
        } else {
            tr.b.push_back(std::exp(refine_boundary(tr.x, row, j)));
        }
    }
    return tr;
}

StructureReport check_structure(const MarketEnvironment& env, const IncomeLaborSpec& inc,
                                const StoppingGridConfig& cfg, double factor) {
    StructureReport rep;
    rep.base = extract_boundary(solve_vi_fdm(env, inc, cfg), inc);
    const IncomeLaborSpec inc_i = inc.scaled(factor, 1.0), inc_l = inc.scaled(1.0, factor);
    rep.income_scaled = extract_boundary(solve_vi_fdm(env, inc_i, cfg), inc_i);
    rep.labor_scaled = extract_boundary(solve_vi_fdm(env, inc_l, cfg), inc_l);
    rep.dy = rep.base.dy;
    rep.income_shift = -std::numeric_limits<double>::infinity();
    rep.labor_shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rep.base.b.size(); ++i) {
        rep.income_shift = std::max(rep.income_shift, rep.income_scaled.b[i] - rep.base.b[i]);
        rep.labor_shift = std::max(rep.labor_shift, rep.base.b[i] - rep.labor_scaled.b[i]);
    }
    rep.income_ok = rep.income_shift <= rep.dy;
    rep.labor_ok = rep.labor_shift <= rep.dy;
    return rep;
}

}  // namespace retire
