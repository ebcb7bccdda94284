#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "retire/error.hpp"
#include "retire/numerics.hpp"
#include "retire/post_solver.hpp"

using namespace retire;

namespace {

MarketEnvironment baseline(double T_bar = 2.5) { return MarketEnvironment::scalar(0.03, 0.1, 0.1, 0.4, 2.0, T_bar); }
UtilitySpec pair(double a = 10.0) { return UtilitySpec::power_pair(0.5, 0.75, a); }
const ApyParams kApy{2.0, 0.5, 1.0, 2.0};
UtilitySpec apy() { return UtilitySpec::apy(kApy.phi, kApy.psi, kApy.c0, kApy.b0); }

/// Exact quadrature as a DualValue, without surface interpolation.
class QuadDual : public DualValue {
public:
    QuadDual(MarketEnvironment env, UtilitySpec spec) : env_(std::move(env)), spec_(std::move(spec)) {}
    ValueTriple eval(double t, double y) const override { return hatV_quadrature(t, y, env_, spec_); }

private:
    MarketEnvironment env_;
    UtilitySpec spec_;
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(HatVQuadrature, TerminalIsZero) {
    const auto env = baseline();
    for (double y : {0.01, 0.3, 1.0, 50.0}) {
        const auto v = hatV_quadrature(env.T_bar, y, env, pair());
        EXPECT_EQ(v.value, 0.0);
        EXPECT_EQ(v.dy, 0.0);
    }
    EXPECT_THROW(hatV_quadrature(0.0, -1.0, env, pair()), ValidationError);
    EXPECT_THROW(hatV_quadrature(3.0, 1.0, env, pair()), ValidationError);
}

TEST(HatVQuadrature, BasicOnlyRegimeMatchesLognormalMoment) {
    const auto env = baseline();
    const auto spec = pair();
    const double alpha = 0.5, p = -alpha / (1 - alpha), th2 = env.theta_norm2();
    const double m = 0.1 - 0.03 - 0.5 * th2;
    const double lam = 0.1 - p * m - 0.5 * p * p * th2;
    const double t = 0.5, tau = env.T_bar - t;
    for (double f : {1e3, 3e3}) {
        const double y = f * spec.envelope().y_bar;
        const double v = (1 - alpha) / alpha * std::pow(y, p) * (1 - std::exp(-lam * tau)) / lam;
        const auto q = hatV_quadrature(t, y, env, spec);
        EXPECT_LT(rel(q.value, v), 1e-6);
        EXPECT_LT(rel(q.dy, p / y * v), 1e-6);
        EXPECT_LT(rel(q.dyy, p * (p - 1) / (y * y) * v), 1e-6);
    }
}

TEST(HatVQuadrature, GaussHermiteConvergesToPartialMoments) {
    const auto env = baseline();
    QuadratureOptions coarse, fine;
    coarse.method = fine.method = ExpectationMethod::GaussHermite;
    coarse.gh_nodes = 32;
    fine.gh_nodes = 128;
    for (double y : {0.05, 0.3, 1.0, 4.0}) {
        const auto exact = hatV_quadrature(0.2, y, env, pair());
        const double e32 = rel(hatV_quadrature(0.2, y, env, pair(), coarse).value, exact.value);
        const double e128 = rel(hatV_quadrature(0.2, y, env, pair(), fine).value, exact.value);
        // h has a kink, so the node rule converges algebraically rather than spectrally
        EXPECT_LT(e128, 2e-5) << y;
        EXPECT_LE(e128, e32 + 1e-12) << y;
    }
    for (double y : {0.05, 0.6, 3.0}) {
        const auto exact = hatV_quadrature(0.2, y, env, apy());
        EXPECT_LT(rel(hatV_quadrature(0.2, y, env, apy(), fine).value, exact.value), 1e-5) << y;
    }
}

TEST(HatVQuadrature, AgreesWithMonteCarlo) {
    const auto env = baseline();
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> ut(0.0, 2.4), ly(std::log(0.05), std::log(5.0));
    int outside = 0;
    for (int i = 0; i < 20; ++i) {
        const double t = ut(gen), y = std::exp(ly(gen));
        const auto q = hatV_quadrature(t, y, env, pair());
        const auto mc = hatV_mc(t, y, 4000, 100 + i, env, pair(), 200);
        if (std::abs(mc.value - q.value) > 3 * mc.std_error) ++outside;
    }
    // 3 s.e. covers 99.7%; allow one excursion in 20
    EXPECT_LE(outside, 1);
    const auto q = hatV_quadrature(0.0, 1.0, env, pair());
    const auto mc = hatV_mc(0.0, 1.0, 100000, 5, env, pair(), 100);
    EXPECT_LT(std::abs(mc.value - q.value), 4 * mc.std_error);
}

TEST(HatVMc, TerminalAndStandardErrorScaling) {
    const auto env = baseline();
    const auto z = hatV_mc(env.T_bar, 1.0, 100, 1, env, pair());
    EXPECT_EQ(z.value, 0.0);
    EXPECT_EQ(z.std_error, 0.0);
    const auto a = hatV_mc(0.0, 1.0, 4000, 1, env, pair(), 100);
    const auto b = hatV_mc(0.0, 1.0, 16000, 2, env, pair(), 100);
    EXPECT_NEAR(b.std_error / a.std_error, 0.5, 0.1);
    const auto c = hatV_mc(0.0, 1.0, 4000, 1, env, pair(), 100);
    EXPECT_EQ(a.value, c.value);
}

TEST(HatVQuadrature, ConvexDecreasingAtRandomPoints) {
    const auto env = baseline();
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> ut(0.0, 2.49), ly(std::log(1e-3), std::log(20.0));
    for (int i = 0; i < 200; ++i) {
        const double t = ut(gen), y = std::exp(ly(gen));
        const auto q = hatV_quadrature(t, y, env, pair());
        EXPECT_GE(q.dyy, -1e-8);
        EXPECT_LT(q.dy, 0.0);
        EXPECT_GE(q.value, 0.0);
    }
}

TEST(HatVQuadrature, PdeResidual) {
    const auto env = baseline();
    const double th2 = env.theta_norm2();
    for (double t : {0.3, 1.0, 2.0})
        for (double y : {0.05, 0.2, 0.9, 3.0}) {
            const double h = 1e-4;
            const auto v = hatV_quadrature(t, y, env, pair());
            const double vt =
                (hatV_quadrature(t + h, y, env, pair()).value - hatV_quadrature(t - h, y, env, pair()).value) / (2 * h);
            const double res = vt + 0.5 * th2 * y * y * v.dyy + 0.07 * y * v.dy - 0.1 * v.value + dual_h(y, pair());
            const double scale = std::abs(vt) + 0.1 * v.value + dual_h(y, pair()) + std::abs(0.07 * y * v.dy);
            EXPECT_LT(std::abs(res) / scale, 1e-4) << t << " " << y;
        }
}

TEST(HatVQuadrature, WealthVanishesForLargeY) {
    const auto env = baseline();
    const auto small = hatV_quadrature(0.0, 1e4, env, pair());
    const auto mid = hatV_quadrature(0.0, 1.0, env, pair());
    EXPECT_LT(-small.dy, 1e-6 * -mid.dy);
}

TEST(HatVQuadrature, ScaledUtilityIdentity) {
    // u -> 2u gives h2(y) = 2 h(y/2), hence V2(t, y) = 2 V(t, y/2)
    const auto env = baseline();
    const auto k = num::linspace(0.0, 300.0, 3001);
    auto tab = tabulate_total_utility(pair(), k);
    auto tab2 = tab;
    for (auto& v : tab2.value) v *= 2.0;
    const auto s1 = UtilitySpec::tabulated(tab.k, tab.value);
    const auto s2 = UtilitySpec::tabulated(tab2.k, tab2.value);
    for (double y : {0.5, 1.0, 2.0}) {
        const double a = hatV_quadrature(1.0, y, env, s2).value;
        const double b = 2.0 * hatV_quadrature(1.0, y / 2, env, s1).value;
        EXPECT_LT(rel(a, b), 1e-9);
    }
}

TEST(PostSurface, GridStructureAndShape) {
    const auto env = baseline();
    PostGridConfig cfg;
    cfg.n_t = 101;
    cfg.n_y = 120;
    const auto spec = pair();
    const auto grid = post_y_grid(spec, cfg);
    // log-spaced nodes plus the kink
    ASSERT_EQ(grid.size(), cfg.n_y + 1);
    EXPECT_NE(std::find(grid.begin(), grid.end(), spec.envelope().y_bar), grid.end());
    EXPECT_NEAR(grid.front(), 1e-3 * spec.envelope().y_bar, 1e-15);
    EXPECT_NEAR(grid.back(), cfg.y_max, 1e-12);

    const auto s = build_post_surface(env, spec, cfg);
    ASSERT_EQ(s.nt(), cfg.n_t);
    for (std::size_t j = 0; j < s.ny(); ++j) EXPECT_EQ(s.node(s.nt() - 1, j).value, 0.0);
    for (std::size_t i = 0; i + 1 < s.nt(); ++i)
        for (std::size_t j = 0; j < s.ny(); ++j) {
            const auto n = s.node(i, j);
            EXPECT_GT(n.value, 0.0);
            EXPECT_LT(n.dy, 0.0);
            EXPECT_GE(n.dyy, -1e-8);
            if (j > 0) EXPECT_LT(n.value, s.node(i, j - 1).value);
        }

    // off-node derivatives against quadrature
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> ut(0.0, 2.2), ly(std::log(0.05), std::log(8.0));
    for (int i = 0; i < 30; ++i) {
        const double t = ut(gen), y = std::exp(ly(gen));
        const auto q = hatV_quadrature(t, y, env, spec);
        const auto r = hatV_derivatives(s, t, y);
        EXPECT_FALSE(r.edge);
        EXPECT_LT(rel(r.dy, q.dy), 2e-3) << t << " " << y;
    }
}

TEST(PostValue, FallsBackToQuadratureOffGrid) {
    const auto env = baseline();
    PostGridConfig cfg;
    cfg.n_t = 6;
    cfg.n_y = 60;
    auto s = std::make_shared<const ValueSurface>(build_post_surface(env, pair(), cfg));
    const PostValue pv(s, env, pair());
    const double y = 50.0;
    EXPECT_FALSE(s->contains(0.5, y));
    EXPECT_EQ(pv.eval(0.5, y).value, hatV_quadrature(0.5, y, env, pair()).value);
}

TEST(PrimalValue, DualityRoundtripMonotoneConcave) {
    const auto env = baseline();
    const QuadDual dual(env, pair());
    const auto grid = num::logspace(1e-3, 50.0, 200);
    const double t = 0.5;
    for (double y0 : {0.08, 0.4, 1.5}) {
        const double x = -dual.eval(t, y0).dy;
        const auto p = primal_value(dual, grid, t, x);
        EXPECT_FALSE(p.on_edge);
        EXPECT_NEAR(p.value, dual.eval(t, y0).value + x * y0, 1e-8 * (1 + std::abs(p.value)));
        EXPECT_NEAR(p.y_opt, y0, 1e-4 * y0);
    }
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> ux(0.5, 60.0);
    for (int i = 0; i < 50; ++i) {
        double x1 = ux(gen), x2 = ux(gen);
        if (x1 > x2) std::swap(x1, x2);
        const double v1 = primal_value(dual, grid, t, x1).value;
        const double v2 = primal_value(dual, grid, t, x2).value;
        const double vm = primal_value(dual, grid, t, 0.5 * (x1 + x2)).value;
        EXPECT_LE(v1, v2 + 1e-10);
        EXPECT_GE(vm - 0.5 * (v1 + v2), -1e-8);
    }
    EXPECT_THROW(primal_value(dual, grid, t, -1.0), ValidationError);
}

TEST(PostStrategy, ComonotoneAndConsumptionJump) {
    const auto env = baseline();
    const auto spec = pair();
    const QuadDual dual(env, spec);
    const double t = 1.0;
    const auto ys = num::logspace(0.02, 20.0, 60);
    StrategyPoint prev;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const auto s = post_strategy(dual, t, ys[i], env, spec);
        const auto q = hatV_quadrature(t, ys[i], env, spec);
        EXPECT_NEAR(s.X, -q.dy, 1e-12 * (1 + std::abs(q.dy)));
        EXPECT_NEAR(s.pi_total, env.theta()(0) / 0.4 * ys[i] * q.dyy, 1e-10 * (1 + std::abs(s.pi_total)));
        EXPECT_NEAR(s.c + s.g, s.k, 1e-9 * (1 + s.k));
        EXPECT_GE(s.X, 0.0);
        if (i > 0) {
            EXPECT_LT(s.X, prev.X);
            EXPECT_LE(s.k, prev.k);
        }
        prev = s;
    }
    const auto far = post_strategy(dual, t, 1e4, env, spec);
    EXPECT_LT(far.X, 1e-3);
    EXPECT_LT(far.k, 1e-3);

    const double yb = spec.envelope().y_bar;
    const auto lo = post_strategy(dual, t, yb * (1 - 1e-9), env, spec);
    const auto hi = post_strategy(dual, t, yb * (1 + 1e-9), env, spec);
    EXPECT_NEAR(lo.k, 45.477, 5e-3);
    EXPECT_NEAR(hi.k, 5.4772, 5e-4);
    EXPECT_NEAR(lo.X, hi.X, 1e-6 * lo.X);
}

TEST(ApyClosedForm, ConstantsAndResidual) {
    const auto env = baseline(std::numeric_limits<double>::infinity());
    const auto cf = apy_closed_form(1.0, kApy, env);
    EXPECT_NEAR(cf.C[1], -1.0 / 0.03, 1e-12);
    EXPECT_NEAR(cf.C[1], -33.333, 5e-4);
    EXPECT_NEAR(cf.kink, std::pow(2.0, -0.5), 1e-15);
    const auto ys = num::logspace(1e-3, 0.9, 100);
    for (double y : ys) {
        if (std::abs(y / cf.kink - 1) < 1e-6) continue;
        const auto v = apy_closed_form(y, kApy, env).v;
        const double res = stationary_residual(v, y, env, apy());
        EXPECT_LE(std::abs(res), 1e-8 * (1 + std::abs(v.value) + dual_h(y, apy()))) << y;
    }
    EXPECT_THROW(apy_closed_form(-1.0, kApy, env), ValidationError);
}

TEST(ApySmoothFit, IsC1AtKinkAndSolvesStationaryEquation) {
    const auto env = baseline(std::numeric_limits<double>::infinity());
    const auto fit = apy_smooth_fit(kApy, env);
    const double th2 = env.theta_norm2();
    for (double n : {fit.n_plus, fit.n_minus})
        EXPECT_NEAR(0.5 * th2 * n * (n - 1) + 0.07 * n - 0.1, 0.0, 1e-12);
    EXPECT_GT(fit.n_plus, 1.0);
    EXPECT_LT(fit.n_minus, 0.0);
    const double k = fit.kink;
    const auto l = apy_smooth_fit_value(k * (1 - 1e-12), kApy, env);
    const auto r = apy_smooth_fit_value(k, kApy, env);
    EXPECT_NEAR(l.value, r.value, 1e-9 * std::abs(r.value));
    EXPECT_NEAR(l.dy, r.dy, 1e-8 * std::abs(r.dy));
    for (double y : {0.01, 0.1, 0.5, 0.9, 3.0}) {
        const auto v = apy_smooth_fit_value(y, kApy, env);
        EXPECT_LE(std::abs(stationary_residual(v, y, env, apy())), 1e-8 * (1 + std::abs(v.value)));
    }
}

TEST(InfiniteHorizon, MatchesSmoothFit) {
    const auto env = baseline(std::numeric_limits<double>::infinity());
    for (double y : num::logspace(0.02, 5.0, 20)) {
        const auto ih = infinite_horizon_hatV(y, env, apy());
        const auto sf = apy_smooth_fit_value(y, kApy, env);
        EXPECT_LT(rel(ih.v.value, sf.value), 1e-4) << y;
        EXPECT_LE(ih.tail_bound, 1e-6 * std::abs(ih.v.value));
    }
}

TEST(InfiniteHorizon, LongFiniteHorizonApproachesStationaryValue) {
    // r = 0.05 makes the slowest term, -c0/r, decay as e^{-10} by T_bar = 200
    const auto inf_env = MarketEnvironment::scalar(0.05, 0.1, 0.1, 0.4, 2.0, std::numeric_limits<double>::infinity());
    const auto fin_env = MarketEnvironment::scalar(0.05, 0.1, 0.1, 0.4, 2.0, 200.0);
    for (double y : num::logspace(0.02, 5.0, 12)) {
        const auto sf = apy_smooth_fit_value(y, kApy, inf_env);
        EXPECT_LT(rel(hatV_quadrature(0.0, y, fin_env, apy()).value, sf.value), 1e-3) << y;
    }
}

TEST(InfiniteHorizon, FiniteHorizonEqualsStationaryMinusDiscountedTail) {
    // V(y) = V_T(0, y) + e^{-rho T} E[V(Y(T))] for the stationary V
    const auto inf_env = baseline(std::numeric_limits<double>::infinity());
    const double T = 30.0;
    const auto fin_env = baseline(T);
    const double th2 = inf_env.theta_norm2(), m = (0.1 - 0.03 - 0.5 * th2) * T, sv = std::sqrt(th2 * T);
    const auto& [z, w] = num::gauss_hermite_normal(200);
    for (double y : {0.05, 0.4, 2.0}) {
        double tail = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i)
            tail += w[i] * apy_smooth_fit_value(y * std::exp(m + sv * z[i]), kApy, inf_env).value;
        tail *= std::exp(-0.1 * T);
        const double stat = apy_smooth_fit_value(y, kApy, inf_env).value;
        EXPECT_NEAR(hatV_quadrature(0.0, y, fin_env, apy()).value, stat - tail, 1e-4 * std::abs(stat)) << y;
    }
}

TEST(InfiniteHorizon, LargeDiscountRateLimit) {
    // Y drifts at rho - r, so rho V(y) -> int_0^inf e^{-u} h(y e^u) du rather than h(y)
    const double rho = 10.0;
    const auto env = MarketEnvironment::scalar(0.03, rho, 0.1, 0.4, 2.0, std::numeric_limits<double>::infinity());
    for (double y : {0.05, 1.0, 5.0}) {
        const std::size_t n = 40000;
        const double U = 40.0, du = U / n;
        double lim = 0.0;
        for (std::size_t i = 0; i <= n; ++i) {
            const double u = i * du, wgt = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            lim += wgt * std::exp(-u) * dual_h(y * std::exp(u), pair());
        }
        lim *= du / 3.0;
        EXPECT_LE(std::abs(rho * infinite_horizon_hatV(y, env, pair()).v.value - lim), 0.05 * lim) << y;
    }
    const auto slow = MarketEnvironment::scalar(0.03, 0.01, 0.1, 0.4, 2.0, std::numeric_limits<double>::infinity());
    EXPECT_THROW(infinite_horizon_hatV(1.0, slow, apy()), ValidationError);
}

TEST(Pension, AnnuityClosedForm) {
    const auto env = baseline();
    EXPECT_EQ(pension_adjusted_wealth(3.0, 1.0, Schedule::constant(0.0), env), 3.0);
    EXPECT_EQ(pension_adjusted_wealth(3.0, env.T_bar, Schedule::constant(2.0), env), 3.0);
    const double tau = 0.7;
    EXPECT_NEAR(pension_adjusted_wealth(3.0, tau, Schedule::constant(2.0), env),
                3.0 + 2.0 * (1 - std::exp(-0.03 * (env.T_bar - tau))) / 0.03, 1e-12);
    EXPECT_THROW(pension_adjusted_wealth(3.0, 3.0, Schedule::constant(2.0), env), ValidationError);
}
