"""Volterra-type Lyapunov functional along a computed wave profile.

With g(x) = x - 1 - ln x the functional is

    L = c S* g(S/S*) + c I* g(I/I*) + d1 S* (V1 + V2) + d2 I* (U1 + U2),

    V1(xi) = int_0^s g(S(xi - r)/S*) dr - int_{-s}^0 g(S(xi - r)/S*) dr,

with s = sin(theta); V2 uses cos(theta), and U1, U2 are the same integrals
of I.  Along a wave profile

    dL/dxi = A(S, I) - d1 S* sum g(S(xi +- .)/S) - d2 I* sum g(I(xi +- .)/I),

the sums running over the four shifts and A collecting the reaction terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import Equilibria, ModelParams, validate_params
from .profile import ProfileGrid, hat_extend

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def g(x):
    """g(x) = x - 1 - ln x for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(~np.isfinite(x)):
        raise ValueError("g is defined for finite x > 0 only")
    out = x - 1.0 - np.log(x)
    return out if out.ndim else float(out)


def _require_endemic(eq: Equilibria) -> tuple[float, float]:
    if eq.S_star is None or eq.I_star is None:
        raise ParameterError("the Lyapunov functional needs an endemic equilibrium (R0 > 1)")
    return eq.S_star, eq.I_star


def window(p: ModelParams, grid: ProfileGrid) -> tuple[float, float]:
    """Evaluation window: the grid inset by 1 + max(sin, cos) at each end."""
    inset = 1.0 + max(p.sin, p.cos)
    return -grid.X + inset, grid.X - inset


def _half_integrals(grid: ProfileGrid, which: str, ref: float, xi: np.ndarray, a: float) -> np.ndarray:
    """int_0^a g(u(xi - r)/ref) dr - int_{-a}^0 g(u(xi - r)/ref) dr (Gauss-Legendre)."""
    r = 0.5 * a * (_GL_NODES + 1.0)  # nodes on [0, a]
    w = 0.5 * a * _GL_WEIGHTS
    back = g(hat_extend(grid, which, xi[:, None] - r[None, :]) / ref)
    ahead = g(hat_extend(grid, which, xi[:, None] + r[None, :]) / ref)
    return (back - ahead) @ w


def _positive(grid: ProfileGrid, xi: np.ndarray) -> None:
    lo = xi.min() - 1.0
    hi = xi.max() + 1.0
    mask = (grid.xs >= lo) & (grid.xs <= hi)
    if np.any(grid.S[mask] <= 0) or np.any(grid.I[mask] <= 0):
        raise ValueError("profile must be strictly positive where the functional is evaluated")


def eval_L(p: ModelParams, c: float, eq: Equilibria, grid: ProfileGrid, xi):
    """Lyapunov functional at ``xi`` (scalar or array)."""
    validate_params(p, profile_mode=True)
    S_star, I_star = _require_endemic(eq)
    x = np.atleast_1d(np.asarray(xi, dtype=float))
    _positive(grid, x)
    S = hat_extend(grid, "S", x)
    I = hat_extend(grid, "I", x)
    W = c * S_star * g(S / S_star) + c * I_star * g(I / I_star)
    V = _half_integrals(grid, "S", S_star, x, p.sin) + _half_integrals(grid, "S", S_star, x, p.cos)
    U = _half_integrals(grid, "I", I_star, x, p.sin) + _half_integrals(grid, "I", I_star, x, p.cos)
    out = W + p.d1 * S_star * V + p.d2 * I_star * U
    return out if np.ndim(xi) else float(out[0])


def reaction_term(p: ModelParams, eq: Equilibria, S, I):
    """Reaction part A(S, I) of dL/dxi; nonpositive for positive states.

    Closed form of (1 - S*/S)(Lambda - f - mu1 S) + (1 - I*/I)(f - mu2 I), with
    f the incidence, after Lambda and mu2 are eliminated through the endemic
    steady-state relations.
    """
    S_star, I_star = _require_endemic(eq)
    S = np.asarray(S, dtype=float)
    I = np.asarray(I, dtype=float)
    a = p.alpha
    f_star = p.beta * S_star * I_star / (1.0 + a * I_star)
    bracket = 3.0 - S_star / S - S * (1.0 + a * I_star) / (S_star * (1.0 + a * I)) - (1.0 + a * I) / (1.0 + a * I_star)
    square = a * p.beta * S_star * (I - I_star) ** 2 / ((1.0 + a * I) * (1.0 + a * I_star) ** 2)
    # the mu1 part of the S equation contributes -mu1 (S - S*)^2 / S
    out = f_star * bracket - square - p.mu1 * (S - S_star) ** 2 / S
    return out if out.ndim else float(out)


def reaction_term_direct(p: ModelParams, eq: Equilibria, S, I):
    """A(S, I) straight from its definition; used to cross-check the closed form."""
    S_star, I_star = _require_endemic(eq)
    S = np.asarray(S, dtype=float)
    I = np.asarray(I, dtype=float)
    f = p.beta * S * I / (1.0 + p.alpha * I)
    out = (1.0 - S_star / S) * (p.Lambda - f - p.mu1 * S) + (1.0 - I_star / I) * (f - p.mu2 * I)
    return out if out.ndim else float(out)


def _shift_g_sum(p: ModelParams, grid: ProfileGrid, which: str, xi: np.ndarray, centre: np.ndarray) -> np.ndarray:
    total = np.zeros_like(xi)
    for d in (p.sin, -p.sin, p.cos, -p.cos):
        total += g(hat_extend(grid, which, xi + d) / centre)
    return total


def eval_dL_analytic(p: ModelParams, c: float, eq: Equilibria, grid: ProfileGrid, xi):
    """dL/dxi from the wave equations, with the shift sums weighted by d1 S* and d2 I*."""
    validate_params(p, profile_mode=True)
    S_star, I_star = _require_endemic(eq)
    x = np.atleast_1d(np.asarray(xi, dtype=float))
    _positive(grid, x)
    S = hat_extend(grid, "S", x)
    I = hat_extend(grid, "I", x)
    out = (
        reaction_term(p, eq, S, I)
        - p.d1 * S_star * _shift_g_sum(p, grid, "S", x, S)
        - p.d2 * I_star * _shift_g_sum(p, grid, "I", x, I)
    )
    return out if np.ndim(xi) else float(out[0])


def shift_integral_derivative(p: ModelParams, grid: ProfileGrid, which: str, ref: float, xi, a: float):
    """Closed-form xi-derivative of one V/U integral: 2 g(u) - g(u(xi - a)) - g(u(xi + a))."""
    x = np.asarray(xi, dtype=float)
    u = lambda y: hat_extend(grid, which, y) / ref  # noqa: E731
    return 2.0 * g(u(x)) - g(u(x - a)) - g(u(x + a))


@dataclass
class LyapunovTrace:
    xs: np.ndarray
    L: np.ndarray
    dL_analytic: np.ndarray
    dL_numeric: np.ndarray
    dL_half_step: np.ndarray
    max_positive_dL: float
    min_L: float

    def rows(self):
        return zip(self.xs, self.L, self.dL_analytic, self.dL_numeric)


def lyapunov_trace(p: ModelParams, c: float, eq: Equilibria, grid: ProfileGrid) -> LyapunovTrace:
    """Functional and both derivatives at every node of the evaluation window.

    ``dL_numeric`` is the centred difference with step h; ``dL_half_step``
    repeats it with step h/2 as a consistency check.
    """
    lo, hi = window(p, grid)
    xs = grid.xs[(grid.xs >= lo - 1e-12) & (grid.xs <= hi + 1e-12)]
    h = grid.h
    L = eval_L(p, c, eq, grid, xs)
    dnum = (eval_L(p, c, eq, grid, xs + h) - eval_L(p, c, eq, grid, xs - h)) / (2 * h)
    dhalf = (eval_L(p, c, eq, grid, xs + 0.5 * h) - eval_L(p, c, eq, grid, xs - 0.5 * h)) / h
    dan = eval_dL_analytic(p, c, eq, grid, xs)
    return LyapunovTrace(
        xs=xs,
        L=L,
        dL_analytic=dan,
        dL_numeric=dnum,
        dL_half_step=dhalf,
        max_positive_dL=float(max(dnum.max(), 0.0)),
        min_L=float(L.min()),
    )


def monotonicity_report(trace: LyapunovTrace, eps: float | None = None, agreement_tol: float | None = None,
                        h: float | None = None) -> dict:
    """Share of nodes with dL_numeric <= eps (default 1e-7 max|L|) and the
    agreement between the analytic and numeric derivatives."""
    scale = float(np.max(np.abs(trace.L))) if trace.L.size else 0.0
    eps = 1e-7 * scale if eps is None else eps
    ok = trace.dL_numeric <= eps
    worst_idx = int(np.argmax(trace.dL_numeric)) if trace.xs.size else 0
    report = {
        "eps": eps,
        "n_nodes": int(trace.xs.size),
        "compliant_fraction": float(ok.mean()) if trace.xs.size else 1.0,
        "worst_violation": float(max(trace.dL_numeric[worst_idx] - eps, 0.0)) if trace.xs.size else 0.0,
        "worst_xi": float(trace.xs[worst_idx]) if trace.xs.size else None,
        "violating_xi": [float(x) for x in trace.xs[~ok][:50]],
        "min_L": trace.min_L,
        "max_abs_L": scale,
    }
    if agreement_tol is None and h is not None:
        agreement_tol = max(1e-6, 3 * h * h)
    if agreement_tol is not None:
        gap = np.abs(trace.dL_analytic - trace.dL_numeric)
        report["agreement_tol"] = agreement_tol
        report["agreement_fraction"] = float((gap <= agreement_tol).mean()) if gap.size else 1.0
        report["max_agreement_gap"] = float(gap.max()) if gap.size else 0.0
    report["passed"] = report["compliant_fraction"] == 1.0
    return report
