#include "retire/lifecycle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "retire/dual_process.hpp"
#include "retire/error.hpp"
#include "retire/numerics.hpp"

namespace retire {

LifecycleModel solve_lifecycle_model(const MarketEnvironment& env, const IncomeLaborSpec& inc, const UtilitySpec& spec,
                                     const PostGridConfig& post_cfg, const StoppingGridConfig& stop_cfg) {
    auto surface = std::make_shared<const ValueSurface>(build_post_surface(env, spec, post_cfg));
    auto post = std::make_shared<const PostValue>(std::move(surface), env, spec, post_cfg.quad);
    return assemble_lifecycle_model(env, inc, std::move(post), stop_cfg);
}

LifecycleModel assemble_lifecycle_model(const MarketEnvironment& env, const IncomeLaborSpec& inc,
                                        std::shared_ptr<const PostValue> post, const StoppingGridConfig& stop_cfg) {
    if (!post) throw ValidationError("lifecycle model needs a post-retirement surface");
    LifecycleModel m{env, inc, post->spec(), post, nullptr, {}, nullptr};
    auto stop = std::make_shared<const StoppingSurface>(solve_vi_fdm(env, inc, stop_cfg));
    m.boundary = extract_boundary(*stop, inc);
    m.stop = stop;
    m.pre = assemble_pre_value(stop, post, env, inc);
    return m;
}

double calibrate_initial_dual(double x, const DualValue& dual, double y_lo, double y_hi) {
    if (!(x > 0.0)) throw ValidationError("initial wealth must be positive");
    auto f = [&](double y) { return dual.eval(0.0, y).dy + x; };
    const double f_lo = f(y_lo), f_hi = f(y_hi);
    if (f_lo >= 0.0 || f_hi <= 0.0) {
        std::ostringstream msg;
        msg << "initial wealth x=" << x << " outside the representable range [" << -dual.eval(0.0, y_hi).dy << ", "
            << -dual.eval(0.0, y_lo).dy << "] of the y-grid; extend the grid";
        throw ValidationError(msg.str());
    }
    return num::bisect(f, y_lo, y_hi, 1e-15).root;
}

double calibrate_initial_dual(double x, const LifecycleModel& model) {
    const auto& ys = model.post->surface().y();
    return calibrate_initial_dual(x, *model.pre, ys.front(), ys.back());
}

namespace {

StrategySnapshot snapshot(const DualValue& dual, double t, double y, const LifecycleModel& m) {
    const StrategyPoint s = post_strategy(dual, t, y, m.env, m.spec);
    return {s.X, s.pi_total, s.k, s.c, s.g};
}

double horizon_of(double h, const MarketEnvironment& env) {
    const double H = h > 0.0 ? h : env.T;
    if (H < env.T - 1e-12 || (std::isfinite(env.T_bar) && H > env.T_bar + 1e-12))
        throw ValidationError("simulation horizon must lie in [T, T_bar]");
    return H;
}

bool crosses(const LifecycleModel& m, double t, double y) { return t < m.env.T - 1e-12 && y <= m.boundary.at(t); }

}  // namespace

SimulationResult simulate_lifecycle(const LifecycleModel& model, const SimulationConfig& cfg) {
    if (cfg.n_steps < 1) throw ValidationError("simulation needs n_steps >= 1");
    const double H = horizon_of(cfg.horizon, model.env);
    const double T = model.env.T;
    const std::size_t n = cfg.n_steps;
    const double dt = H / static_cast<double>(n);
    const std::vector<double> grid = num::linspace(0.0, H, n + 1);

    SimulationResult res;
    res.y_star = calibrate_initial_dual(cfg.x0, model);
    res.b0 = model.boundary.at(0.0);
    std::vector<std::size_t> obs_idx;
    for (double to : cfg.observation_times) {
        if (to < 0.0 || to > H + 1e-12) throw ValidationError("observation time outside the simulated horizon");
        const auto i = static_cast<std::size_t>(std::llround(to / dt));
        obs_idx.push_back(i);
        res.observation_times.push_back(grid[i]);
    }
    const bool immediate = res.y_star <= res.b0;
    res.outcomes.resize(cfg.n_paths);
    res.paths.resize(std::min(cfg.n_record, cfg.n_paths));

    num::parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t p) {
        PathRng rng(cfg.seed, p);
        PathOutcome& out = res.outcomes[p];
        out.immediate = immediate;
        out.observed.resize(obs_idx.size());
        StrategyPath* rec = p < res.paths.size() ? &res.paths[p] : nullptr;
        bool retired = immediate;
        double y = res.y_star;
        if (immediate) {
            out.tau = 0.0;
            out.at_tau = snapshot(*model.post, 0.0, y, model);
        }
        auto record = [&](std::size_t i) {
            const bool needed = rec || std::find(obs_idx.begin(), obs_idx.end(), i) != obs_idx.end();
            if (!needed) return;
            const DualValue& dual = retired ? static_cast<const DualValue&>(*model.post) : *model.pre;
            const StrategySnapshot s = snapshot(dual, grid[i], y, model);
            for (std::size_t k = 0; k < obs_idx.size(); ++k)
                if (obs_idx[k] == i) out.observed[k] = s;
            if (rec) {
                rec->t.push_back(grid[i]);
                rec->Y.push_back(y);
                rec->X.push_back(s.X);
                rec->pi.push_back(s.pi);
                rec->k.push_back(s.k);
                rec->c.push_back(s.c);
                rec->g.push_back(s.g);
                rec->retired.push_back(retired ? 1 : 0);
            }
        };
        record(0);
        for (std::size_t i = 0; i < n; ++i) {
            const double z = cfg.zero_noise ? 0.0 : rng.normal();
            const double y_next = exact_step(y, grid[i], dt, z, model.env);
            const double t_next = grid[i + 1];
            if (!retired) {
                if (crosses(model, t_next, y_next)) {
                    const double g0 = y - model.boundary.at(grid[i]);
                    const double g1 = y_next - model.boundary.at(t_next);
                    const double w = g0 > 0.0 ? g0 / (g0 - g1) : 0.0;
                    out.tau = grid[i] + w * dt;
                    out.crossed = true;
                    out.at_tau = snapshot(*model.post, out.tau, y + w * (y_next - y), model);
                    retired = true;
                } else if (t_next >= T - 1e-12) {
                    out.tau = T;
                    out.at_tau = snapshot(*model.post, T, y_next, model);
                    retired = true;
                }
            }
            y = y_next;
            record(i + 1);
        }
        if (rec) {
            rec->tau = out.tau;
            rec->stream = p;
        }
    });
    return res;
}

MomentStats moments(const std::vector<double>& values) {
    MomentStats m;
    m.n = values.size();
    if (values.empty()) return m;
    m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(m.n);
    if (m.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - m.mean) * (v - m.mean);
        m.std = std::sqrt(ss / static_cast<double>(m.n - 1));
        m.se = m.std / std::sqrt(static_cast<double>(m.n));
    }
    return m;
}

StatsSummary summarize(const SimulationResult& result) {
    if (result.outcomes.empty()) throw ValidationError("summarize needs at least one path");
    StatsSummary s;
    const auto& oc = result.outcomes;
    s.n_paths = oc.size();
    auto collect = [&](auto get) {
        std::vector<double> v;
        v.reserve(oc.size());
        for (const auto& o : oc) v.push_back(get(o));
        return moments(v);
    };
    for (std::size_t k = 0; k < result.observation_times.size(); ++k) {
        ObservationStats o;
        o.t = result.observation_times[k];
        o.X = collect([&](const PathOutcome& p) { return p.observed[k].X; });
        o.pi = collect([&](const PathOutcome& p) { return p.observed[k].pi; });
        o.k = collect([&](const PathOutcome& p) { return p.observed[k].k; });
        o.c = collect([&](const PathOutcome& p) { return p.observed[k].c; });
        o.g = collect([&](const PathOutcome& p) { return p.observed[k].g; });
        s.observations.push_back(o);
    }
    s.tau_all = collect([](const PathOutcome& p) { return p.tau; });
    std::vector<double> pos;
    std::size_t imm = 0, crossed = 0;
    for (const auto& o : oc) {
        if (o.tau > 0.0) pos.push_back(o.tau);
        if (o.immediate) ++imm;
        if (o.crossed) ++crossed;
    }
    s.tau_positive = moments(pos);
    s.immediate_fraction = static_cast<double>(imm) / static_cast<double>(oc.size());
    s.crossed_fraction = static_cast<double>(crossed) / static_cast<double>(oc.size());
    s.X_tau = collect([](const PathOutcome& p) { return p.at_tau.X; });
    s.pi_tau = collect([](const PathOutcome& p) { return p.at_tau.pi; });
    s.k_tau = collect([](const PathOutcome& p) { return p.at_tau.k; });
    s.c_tau = collect([](const PathOutcome& p) { return p.at_tau.c; });
    s.g_tau = collect([](const PathOutcome& p) { return p.at_tau.g; });
    return s;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j);
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double comonotonicity(const SimulationResult& result, std::size_t index) {
    std::vector<double> x, k;
    for (const auto& o : result.outcomes) {
        x.push_back(o.observed.at(index).X);
        k.push_back(o.observed.at(index).k);
    }
    const auto rx = ranks(x), rk = ranks(k);
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
    const double mk = std::accumulate(rk.begin(), rk.end(), 0.0) / static_cast<double>(rk.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (rk[i] - mk);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (rk[i] - mk) * (rk[i] - mk);
    }
    if (sxx == 0.0 || syy == 0.0) return 1.0;
    return sxy / std::sqrt(sxx * syy);
}

ReplicationReport replicate_wealth(const LifecycleModel& model, const ReplicationConfig& cfg) {
    if (cfg.dts.empty() || cfg.n_paths == 0) throw ValidationError("replication needs step sizes and paths");
    const double H = horizon_of(cfg.horizon, model.env);
    std::vector<double> dts = cfg.dts;
    std::sort(dts.begin(), dts.end(), std::greater<>());
    const double dt_min = dts.back();
    const auto n_fine = static_cast<std::size_t>(std::llround(H / dt_min));
    if (std::abs(static_cast<double>(n_fine) * dt_min - H) > 1e-9 * H)
        throw ValidationError("replication steps must divide the horizon");
    std::vector<std::size_t> mult;
    for (double dt : dts) {
        const auto m = static_cast<std::size_t>(std::llround(dt / dt_min));
        if (m == 0 || n_fine % m != 0 || std::abs(static_cast<double>(m) * dt_min - dt) > 1e-9 * dt)
            throw ValidationError("replication steps must be multiples of the smallest one");
        mult.push_back(m);
    }

    const auto& ys = model.post->surface().y();
    const bool start_retired_all = cfg.retired_from_start;
    const double y0 = start_retired_all ? calibrate_initial_dual(cfg.x0, *model.post, ys.front(), ys.back())
                                        : calibrate_initial_dual(cfg.x0, model);
    const bool start_retired = start_retired_all || y0 <= model.boundary.at(0.0);
    const double th = std::sqrt(model.env.theta_norm2());
    const double T = model.env.T;

    ReplicationReport rep;
    rep.levels.resize(dts.size());
    for (std::size_t l = 0; l < dts.size(); ++l) {
        rep.levels[l].dt = dts[l];
        rep.levels[l].path_gaps.assign(cfg.n_paths, 0.0);
    }
    num::parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t p) {
        PathRng rng(cfg.seed, p);
        std::vector<double> dW(n_fine, 0.0);
        if (!cfg.zero_noise)
            for (auto& w : dW) w = std::sqrt(dt_min) * rng.normal();
        for (std::size_t l = 0; l < dts.size(); ++l) {
            const std::size_t m = mult[l], n = n_fine / m;
            const double dt = dts[l], sdt = std::sqrt(dt);
            double y = y0, x = cfg.x0, err2 = 0.0, ref2 = 0.0;
            bool retired = start_retired;
            for (std::size_t i = 0;; ++i) {
                const double t = static_cast<double>(i) * dt;
                const DualValue& dual = retired ? static_cast<const DualValue&>(*model.post) : *model.pre;
                const ValueTriple v = dual.eval(t, y);
                const double x_star = -v.dy;
                err2 += (x - x_star) * (x - x_star);
                ref2 += x_star * x_star;
                if (i == n) break;
                double w = 0.0;
                for (std::size_t k = i * m; k < (i + 1) * m; ++k) w += dW[k];
                // pi^T sigma dB = |theta| Y W_yy dW and pi^T mu = |theta|^2 Y W_yy
                const double diff = th * y * v.dyy;
                const double income = retired ? 0.0 : model.inc.income(t);
                const double k = dual_h_neg_derivative(y, model.spec);
                double x_next = x + (model.env.r(t) * x + th * diff - k + income) * dt + diff * w;
                if (cfg.milstein) {
                    const double y_sup = y * (1.0 - th * sdt);
                    const double diff_sup = th * y_sup * dual.eval(t, y_sup).dyy;
                    x_next += (diff_sup - diff) / (2.0 * sdt) * (w * w - dt);
                }
                const double y_next = exact_step(y, t, dt, w / sdt, model.env);
                const double t_next = static_cast<double>(i + 1) * dt;
                if (!retired && (crosses(model, t_next, y_next) || t_next >= T - 1e-12)) retired = true;
                x = x_next;
                y = y_next;
            }
            rep.levels[l].path_gaps[p] = std::sqrt(err2 / ref2);
        }
    });
    for (auto& lv : rep.levels) {
        double s = 0.0;
        for (double g : lv.path_gaps) s += g * g;
        lv.rms_gap = std::sqrt(s / static_cast<double>(lv.path_gaps.size()));
    }
    return rep;
}

}  // namespace retire
