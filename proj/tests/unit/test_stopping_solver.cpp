#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "retire/error.hpp"
#include "retire/numerics.hpp"
#include "retire/stopping_solver.hpp"

using namespace retire;

namespace {

MarketEnvironment baseline() { return MarketEnvironment::scalar(0.03, 0.1, 0.1, 0.4, 2.0, 2.5); }
IncomeLaborSpec income(const MarketEnvironment& env) { return build_income_labor(5.0, 0.08, 1.3, 1.0, 2.0, env.rho); }

StoppingGridConfig grid(std::size_t n_t = 6000, std::size_t n_y = 300) {
    StoppingGridConfig g;
    g.n_t = n_t;
    g.n_y = n_y;
    g.y_max = 10.0;
    return g;
}

/// Baseline solve shared across tests.
const StoppingSurface& base_surface() {
    static const StoppingSurface s = [] {
        const auto env = baseline();
        return solve_vi_fdm(env, income(env), grid());
    }();
    return s;
}

/// Simpson rule for smooth integrands.
template <class F>
double simpson(F f, double a, double b, std::size_t n = 2000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (std::size_t i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

}  // namespace

TEST(StoppingPayoff, MatchesDefinition) {
    const auto env = baseline();
    const auto inc = income(env);
    for (double t : {0.0, 0.7, 1.9})
        for (double y : {0.1, 2.0})
            EXPECT_NEAR(stopping_payoff(env, inc, t, y), std::exp(-0.1 * t) * (y * inc.income(t) - inc.labor(t)),
                        1e-12);
}

TEST(StoppingPayoff, ContinueToTMatchesExpectedFlow) {
    // E[Y(u)] = y e^{(rho - r)(u - t)}, so the working value is deterministic in expectation
    const auto env = baseline();
    const auto inc = income(env);
    for (double t : {0.0, 1.2})
        for (double y : {1.0, 6.0, 10.0}) {
            const double flow = simpson(
                [&](double u) {
                    return std::exp(-0.1 * u) * (y * std::exp(0.07 * (u - t)) * inc.income(u) - inc.labor(u));
                },
                t, 2.0);
            EXPECT_NEAR(continue_to_T(env, inc, t, y), std::max(flow, 0.0), 1e-9 * (1 + std::abs(flow)));
        }
}

TEST(SolveViFdm, TerminalLowerAndUpperBoundaryRows) {
    const auto env = baseline();
    const auto inc = income(env);
    const auto& s = base_surface();
    const std::size_t n = s.t.size() - 1;
    EXPECT_DOUBLE_EQ(s.t.back(), 2.0);
    for (std::size_t j = 0; j < s.ny(); ++j) EXPECT_EQ(s.at(n, j), 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
        EXPECT_EQ(s.at(i, 0), 0.0);
        EXPECT_NEAR(s.at(i, s.ny() - 1), continue_to_T(env, inc, s.t[i], 10.0), 1e-10);
    }
    for (double w : s.W) ASSERT_GE(w, 0.0);
    for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t j = 0; j < s.ny(); ++j) ASSERT_EQ(s.exercise[i * s.ny() + j], s.at(i, j) == 0.0 ? 1 : 0);
}

TEST(SolveViFdm, ZeroIncomeMeansImmediateRetirement) {
    const auto env = baseline();
    const auto inc = income(env).scaled(0.0, 1.0);
    const auto s = solve_vi_fdm(env, inc, grid(600, 100));
    for (double w : s.W) EXPECT_EQ(w, 0.0);
    const auto tree = tree_oracle(env, inc, 200);
    for (double w : tree.W) EXPECT_EQ(w, 0.0);
}

TEST(SolveViFdm, CflHandling) {
    const auto env = baseline();
    const auto inc = income(env);
    auto g = grid(500, 300);
    EXPECT_GT(env.T / 500.0, explicit_step_bound(env, 0.0, g));
    const auto s = solve_vi_fdm(env, inc, g);
    EXPECT_GT(s.substeps, 1);
    EXPECT_LE(s.dt / s.substeps, s.cfl_dt);
    g.strict_cfl = true;
    EXPECT_THROW(solve_vi_fdm(env, inc, g), SolverError);
    // closed-form step bound
    const double th2 = env.theta_norm2(), dy = 10.0 / 300;
    EXPECT_NEAR(explicit_step_bound(env, 0.0, grid()), dy * dy / (th2 * 100.0 + 0.07 * 10.0 * dy), 1e-15);
}

TEST(SolveViFdm, RejectsTooSmallYMax) {
    const auto env = baseline();
    auto g = grid(600, 30);
    g.y_max = 0.5;
    EXPECT_THROW(solve_vi_fdm(env, income(env), g), SolverError);
    g.n_y = 2;
    EXPECT_THROW(solve_vi_fdm(env, income(env), g), ValidationError);
}

TEST(SolveViFdm, ObstacleConsistency) {
    const auto env = baseline();
    const auto rep = check_obstacle(base_surface(), env, income(env));
    EXPECT_GE(rep.min_value, 0.0);
    EXPECT_LE(rep.max_residual, 1e-3);
    EXPECT_LE(rep.max_complementarity, 1e-3);
    EXPECT_EQ(rep.monotone_y_violations, 0u);
}

TEST(SolveViFdm, ImplicitSchemeAgreesWithExplicit) {
    const auto env = baseline();
    const auto inc = income(env);
    auto g = grid(400, 150);
    g.scheme = StoppingGridConfig::Scheme::Implicit;
    const auto imp = solve_vi_fdm(env, inc, g);
    EXPECT_EQ(imp.scheme, "implicit-psor");
    const auto ex = solve_vi_fdm(env, inc, grid(6000, 150));
    for (std::size_t j = 30; j < 150; j += 10) {
        const double a = imp.at(0, j), b = ex.at(0, j);
        EXPECT_NEAR(a, b, 0.01 * std::abs(b)) << j;
    }
    const auto bi = extract_boundary(imp, inc), be = extract_boundary(ex, inc);
    for (std::size_t i = 0; i < bi.b.size(); i += 20) EXPECT_LE(std::abs(bi.b[i] - be.at(bi.t[i])), 2 * imp.dy) << i;
}

TEST(FreeBoundary, StructuralTheorems) {
    const auto env = baseline();
    const auto inc = income(env);
    const auto fb = extract_boundary(base_surface(), inc);
    ASSERT_EQ(fb.b.size(), base_surface().t.size() - 1);
    for (std::size_t i = 0; i < fb.b.size(); ++i) {
        EXPECT_GE(fb.b[i], 0.0);
        EXPECT_LE(fb.b[i], fb.upper[i] + fb.dy);
        EXPECT_NEAR(fb.upper[i], inc.labor(fb.t[i]) / inc.income(fb.t[i]), 1e-12);
    }
    EXPECT_EQ(fb.monotone_violations, 0u);
    // L(T)/I(T) = e^{1.3 * 2} / (5 e^{0.08 * 2})
    EXPECT_NEAR(fb.terminal_target, std::exp(2.44) / 5.0, 1e-12);
    EXPECT_NEAR(fb.terminal_target, 2.2946, 5e-5);
    EXPECT_LE(std::abs(fb.terminal - fb.terminal_target), 2 * fb.dy);
    // aged region [T - ell, T]: nondecreasing within one cell
    for (std::size_t i = 1; i < fb.b.size(); ++i)
        if (fb.t[i - 1] >= 1.0) EXPECT_GE(fb.b[i], fb.b[i - 1] - fb.dy);
    EXPECT_NEAR(fb.at(fb.t[10]), fb.b[10], 1e-15);
    EXPECT_NEAR(fb.at(0.5 * (fb.t[10] + fb.t[11])), 0.5 * (fb.b[10] + fb.b[11]), 1e-12);
}

TEST(FreeBoundary, RetirementRegionIsBelowBoundary) {
    const auto& s = base_surface();
    const auto fb = extract_boundary(s, income(baseline()));
    for (std::size_t i = 0; i < fb.b.size(); i += 100)
        for (std::size_t j = 0; j < s.ny(); ++j) {
            if (s.y[j] <= fb.b[i] - 1e-12) EXPECT_EQ(s.at(i, j), 0.0);
            if (s.y[j] > fb.b[i] + s.dy) EXPECT_GT(s.at(i, j), 0.0);
        }
}

TEST(TreeOracle, AgreesWithFdm) {
    const auto env = baseline();
    const auto inc = income(env);
    const auto& s = base_surface();
    const auto fb = extract_boundary(s, inc);
    const auto tree = tree_oracle(env, inc, 2000);
    for (double y : num::linspace(1.0, 9.0, 10)) {
        const std::size_t j = num::bracket(s.y, y);
        const double a = (y - s.y[j]) / s.dy;
        const double fdm = (1 - a) * s.at(0, j) + a * s.at(0, j + 1);
        EXPECT_NEAR(fdm, tree.value(0, y), 0.01 * tree.value(0, y)) << y;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < tree.b.size(); ++i) worst = std::max(worst, std::abs(fb.at(tree.t[i]) - tree.b[i]));
    EXPECT_LE(worst, 3 * s.dy);
}

TEST(Structure, ComparativeStaticsAndComparisonPrinciple) {
    const auto env = baseline();
    const auto inc = income(env);
    const auto rep = check_structure(env, inc, grid(3000, 150));
    EXPECT_TRUE(rep.income_ok);
    EXPECT_TRUE(rep.labor_ok);
    EXPECT_LE(rep.income_shift, rep.dy);
    EXPECT_LE(rep.labor_shift, rep.dy);
    // larger running payoff never lowers W
    const auto lo = solve_vi_fdm(env, inc, grid(3000, 150));
    const auto hi = solve_vi_fdm(env, inc.scaled(1.1, 1.0), grid(3000, 150));
    for (std::size_t k = 0; k < lo.W.size(); ++k) ASSERT_GE(hi.W[k], lo.W[k] - 1e-12);
}

TEST(PreValue, AssemblyProperties) {
    const auto env = baseline();
    const auto inc = income(env);
    const auto spec = UtilitySpec::power_pair(0.5, 0.75, 10.0);
    PostGridConfig pg;
    pg.n_t = 51;
    pg.n_y = 150;
    auto post = std::make_shared<const PostValue>(
        std::make_shared<const ValueSurface>(build_post_surface(env, spec, pg)), env, spec);
    auto stop = std::make_shared<const StoppingSurface>(base_surface());
    const auto pre = assemble_pre_value(stop, post, env, inc);
    const auto fb = extract_boundary(*stop, inc);

    const auto rep = check_pre_value(*pre, fb);
    EXPECT_GE(rep.min_excess, -1e-10);
    EXPECT_LE(rep.terminal_gap, 1e-12);
    EXPECT_EQ(rep.convexity_violations, 0u);
    EXPECT_LE(rep.max_smooth_fit_gap, 5 * fb.dy);

    for (double y : {0.05, 0.7, 3.0}) {
        const auto a = pre->eval(2.0, y), b = post->eval(2.0, y);
        EXPECT_EQ(a.value, b.value);
        EXPECT_EQ(a.dy, b.dy);
    }
    for (std::size_t i : {0ul, 1500ul, 4000ul}) {
        const double t = stop->t[i];
        for (double y : {0.25 * fb.b[i], 0.9 * fb.b[i]}) {
            EXPECT_EQ(pre->eval(t, y).value, post->eval(t, y).value);
            EXPECT_EQ(pre->stopping_part(t, y).value, 0.0);
        }
        const double y = fb.b[i] + 3.0;
        EXPECT_NEAR(pre->stopping_part(t, y).value, std::exp(0.1 * t) * stop->at(i, num::bracket(stop->y, y)),
                    0.05 * pre->stopping_part(t, y).value + 1e-9);
    }
}

TEST(PreStrategy, ContinuityMonotonicityAndSeparation) {
    const auto env = baseline();
    const auto inc = income(env);
    const auto spec = UtilitySpec::power_pair(0.5, 0.75, 10.0);
    PostGridConfig pg;
    pg.n_t = 51;
    pg.n_y = 150;
    auto post = std::make_shared<const PostValue>(
        std::make_shared<const ValueSurface>(build_post_surface(env, spec, pg)), env, spec);
    auto stop = std::make_shared<const StoppingSurface>(base_surface());
    const auto pre = assemble_pre_value(stop, post, env, inc);
    const auto fb = extract_boundary(*stop, inc);

    for (double t : {0.3, 1.0, 1.7}) {
        const double b = fb.at(t), eps = 1e-3 * fb.dy;
        const auto in = pre_strategy(*pre, fb, t, b + eps, env, spec);
        const auto out = post_strategy(*post, t, b + eps, env, spec);
        EXPECT_FALSE(in.retired_region);
        EXPECT_NEAR(in.point.X, out.X, 5 * fb.dy);
        EXPECT_EQ(in.point.k, out.k);
        const auto ret = pre_strategy(*pre, fb, t, 0.5 * b, env, spec);
        EXPECT_TRUE(ret.retired_region);

        double prev = std::numeric_limits<double>::infinity();
        for (double y : num::linspace(b + fb.dy, 9.0, 50)) {
            const auto p = pre_strategy(*pre, fb, t, y, env, spec);
            EXPECT_LT(p.point.X, prev) << t << " " << y;
            EXPECT_EQ(p.point.k, dual_h_neg_derivative(y, spec));
            prev = p.point.X;
        }
    }
}
