import math

import numpy as np
import pytest

import retire


def baseline_env():
    return retire.MarketEnvironment.scalar(r=0.03, rho=0.1, mu=0.1, sigma=0.4, T=2.0, T_bar=2.5)


def test_breakpoints_closed_form():
    for a in (2.0, 5.0, 10.0, 15.0, 20.0):
        env = retire.UtilitySpec.power_pair(0.5, 0.75, a).envelope
        assert env.k_minus == pytest.approx(math.sqrt(3 * a), rel=1e-10)
        assert env.k_plus == pytest.approx(math.sqrt(3 * a) + 4 * a, rel=1e-10)


def test_dual_is_conjugate_on_a_grid():
    spec = retire.UtilitySpec.power_pair(0.5, 0.75, 10.0)
    k = np.logspace(-4, 6, 200001)
    u = np.array([retire.total_utility(x, spec) for x in k])
    for y in (0.1, 0.4, 1.0, 5.0):
        brute = np.max(u - k * y)
        assert retire.dual_h(y, spec) == pytest.approx(brute, rel=1e-5)


def test_split_adds_up():
    spec = retire.UtilitySpec.power_pair(0.5, 0.75, 10.0)
    for y in (0.05, 0.2, 1.0):
        s = retire.split_from_dual(y, spec)
        assert s.total == pytest.approx(retire.dual_h_neg_derivative(y, spec), rel=1e-12)


def test_hatV_is_decreasing_and_convex():
    env = baseline_env()
    spec = retire.UtilitySpec.power_pair(0.5, 0.75, 10.0)
    v = retire.hatV(0.0, 1.0, env, spec)
    assert v.value > 0 and v.dy < 0 and v.dyy > 0


def test_boundary_below_labor_income_ratio():
    env = baseline_env()
    inc = retire.income_labor(C=5, K_prime=0.08, K=1.3, ell=1.0, T=2.0, rho=0.1)
    fb = retire.solve_boundary(env, inc, n_t=1500, n_y=150)
    b = np.array(fb["b"])
    upper = np.array(fb["upper"])
    assert np.all(b <= upper + fb["dy"])
    assert abs(fb["terminal"] - fb["terminal_target"]) <= 2 * fb["dy"]


def test_invalid_input_raises_value_error():
    with pytest.raises(ValueError):
        retire.UtilitySpec.power_pair(0.8, 0.5, 10.0)
    with pytest.raises(ValueError):
        retire.income_labor(C=5, K_prime=0.08, K=1.5, ell=1.9, T=2.0, rho=0.1)


def test_config_roundtrip_and_run(tmp_path):
    cfg = retire.Config.parse("income.C = 6\nsolver.n_t = 1500\nsolver.n_y = 150\n")
    cfg.out_dir = str(tmp_path)
    entries = dict(cfg.entries())
    assert entries["income.C"] == "6"
    code, summary, artifacts = retire.run("solve-boundary", cfg)
    assert code == 0
    assert "b(0)" in summary
    assert all(p.exists() for p in artifacts)
    with pytest.raises(ValueError):
        cfg.set("market.nope", "1")
