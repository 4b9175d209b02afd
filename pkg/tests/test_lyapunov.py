from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirwave import lyapunov, profile
from sirwave.errors import ParameterError
from sirwave.model import ModelParams, equilibria


def flat(env, c, X, h, S, I):
    xs = profile.make_nodes(X, h)
    return profile.ProfileGrid(X, h, xs, np.full(xs.size, float(S)), np.full(xs.size, float(I)), c, env)


@pytest.fixture(scope="module")
def trace80(std, speed, eq, solved80):
    return lyapunov.lyapunov_trace(std, speed, eq, solved80[0])


def test_g_values():
    assert lyapunov.g(1.0) == 0.0
    assert lyapunov.g(math.e) == pytest.approx(math.e - 2.0)
    assert lyapunov.g(2.0) == pytest.approx(1.0 - math.log(2.0))
    with pytest.raises(ValueError):
        lyapunov.g(0.0)
    with pytest.raises(ValueError):
        lyapunov.g(np.array([1.0, -1.0]))


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_g_nonnegative_and_convex(x, y):
    assert lyapunov.g(x) >= 0.0
    pair = lyapunov.g(x / y) + lyapunov.g(y / x)
    assert pair >= 0.0 and (pair > 0.0 or math.isclose(x, y, rel_tol=1e-7))
    mid = lyapunov.g(0.5 * (x + y))
    assert mid <= 0.5 * (lyapunov.g(x) + lyapunov.g(y)) + 1e-9 * (1 + abs(mid))


def test_functional_on_constant_profiles(std, speed, env, eq):
    S_star, I_star = eq.S_star, eq.I_star
    xi = np.linspace(-10, 10, 7)
    at_eq = lyapunov.eval_L(std, speed, eq, flat(env, speed, 20.0, 0.05, S_star, I_star), xi)
    np.testing.assert_allclose(at_eq, 0.0, atol=1e-15)
    # the shift integrals of a constant cancel, leaving the pointwise part
    doubled = lyapunov.eval_L(std, speed, eq, flat(env, speed, 20.0, 0.05, 2 * S_star, I_star), xi)
    np.testing.assert_allclose(doubled, speed * S_star * (1.0 - math.log(2.0)), rtol=1e-13)
    d = lyapunov.eval_dL_analytic(std, speed, eq, flat(env, speed, 20.0, 0.05, S_star, I_star), xi)
    np.testing.assert_allclose(d, 0.0, atol=1e-14)


def test_report_on_endemic_profile(std, speed, env, eq):
    grid = flat(env, speed, 20.0, 0.05, eq.S_star, eq.I_star)
    rep = lyapunov.monotonicity_report(lyapunov.lyapunov_trace(std, speed, eq, grid))
    assert rep["passed"] and rep["compliant_fraction"] == 1.0 and rep["worst_violation"] == 0.0


def test_requires_endemic_state(speed, env):
    p = ModelParams(beta=0.5)
    with pytest.raises(ParameterError):
        lyapunov.eval_L(p, speed, equilibria(p), flat(env, speed, 20.0, 0.05, 1.0, 0.1), 0.0)


@settings(max_examples=200)
@given(
    S=st.floats(1e-3, 5.0),
    I=st.floats(1e-3, 5.0),
    beta=st.floats(1.2, 6.0),
    alpha=st.floats(0.0, 4.0),
    mu1=st.floats(0.2, 2.0),
)
def test_reaction_term_closed_form(S, I, beta, alpha, mu1):
    p = ModelParams(beta=beta, alpha=alpha, mu1=mu1, Lambda=mu1)  # S0 = 1
    eq = equilibria(p)
    if eq.S_star is None:
        return
    closed = lyapunov.reaction_term(p, eq, S, I)
    direct = lyapunov.reaction_term_direct(p, eq, S, I)
    scale = 1.0 + abs(direct) + beta * S * I + p.Lambda * eq.S_star / S + p.mu2 * eq.I_star
    assert closed == pytest.approx(direct, abs=1e-11 * scale)
    assert closed <= 1e-12 * scale


def test_reaction_term_vanishes_only_at_equilibrium(std, eq):
    assert lyapunov.reaction_term(std, eq, eq.S_star, eq.I_star) == pytest.approx(0.0, abs=1e-15)
    S, I = np.meshgrid(np.linspace(0.05, 2, 40), np.linspace(0.05, 2, 40))
    A = lyapunov.reaction_term(std, eq, S, I)
    far = (np.abs(S - eq.S_star) > 0.1) | (np.abs(I - eq.I_star) > 0.1)
    assert np.all(A[far] < 0)


def test_shift_integral_derivative(std, speed, env, eq):
    X, h = 20.0, 0.01
    xs = profile.make_nodes(X, h)
    S = eq.S_star * (1.0 + 0.3 * np.tanh(0.5 * xs))
    grid = profile.ProfileGrid(X, h, xs, S, np.full(xs.size, eq.I_star), speed, env)
    xi = np.array([-3.0, -0.5, 0.0, 2.25])
    step = 1e-3  # inside one cell, where the hat interpolant is linear
    for a in (std.sin, std.cos):
        up = lyapunov._half_integrals(grid, "S", eq.S_star, xi + step, a)
        dn = lyapunov._half_integrals(grid, "S", eq.S_star, xi - step, a)
        exact = lyapunov.shift_integral_derivative(std, grid, "S", eq.S_star, xi, a)
        # Gauss-Legendre on a piecewise-linear integrand is accurate to ~1e-5 here
        np.testing.assert_allclose((up - dn) / (2 * step), exact, rtol=0, atol=1e-5)


def test_monotone_along_wave(std, solved80, trace80):
    rep = lyapunov.monotonicity_report(trace80, h=solved80[0].h)
    assert rep["passed"] and rep["compliant_fraction"] == 1.0
    assert rep["max_agreement_gap"] < 1e-3
    assert rep["agreement_fraction"] == 1.0
    assert np.all(np.diff(trace80.L) <= 1e-7 * rep["max_abs_L"])
    assert np.all(trace80.dL_analytic <= 1e-12)


def test_half_step_consistency(trace80):
    gap = np.abs(trace80.dL_half_step - trace80.dL_numeric)
    assert gap.max() < 1e-3


def test_window_inset(std, solved80, trace80):
    lo, hi = lyapunov.window(std, solved80[0])
    inset = 1.0 + max(std.sin, std.cos)
    assert lo == pytest.approx(-80 + inset) and hi == pytest.approx(80 - inset)
    assert trace80.xs[0] >= lo - 1e-12 and trace80.xs[-1] <= hi + 1e-12


def test_detects_non_monotone_input(std, speed, eq, solved80):
    grid = solved80[0].copy()
    bump = np.exp(-0.5 * ((grid.xs - 5.0) / 0.5) ** 2)
    grid.I = grid.I * (1.0 + 0.5 * bump)
    rep = lyapunov.monotonicity_report(lyapunov.lyapunov_trace(std, speed, eq, grid))
    assert not rep["passed"]
    assert rep["worst_violation"] > 0
    assert any(abs(x - 5.0) < 3.0 for x in rep["violating_xi"])
