"""Upper and lower envelopes of the wave profile and their certification.

The four envelope functions are

    S+(xi) = S0                         I+(xi) = min(e^{l1 xi}, I0)
    S-(xi) = max(S0 (1 - M1 e^{e1 xi}), 0)  I-(xi) = max(e^{l1 xi}(1 - M2 e^{e2 xi}), 0)

with ``l1`` the smaller root of the characteristic function.  Each satisfies a
one-sided differential inequality of the wave system away from its kinks;
:func:`verify_upper_lower` checks all four on a sample grid.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dispersion
from .dispersion import RootPair
from .model import ModelParams, upper_plateau

# residuals are compared against this fraction of the summed term magnitudes
RESIDUAL_RTOL = 1e-12


@dataclass(frozen=True)
class EnvelopeParams:
    """Constants defining the envelope pair.

    ``knot1``/``knot2`` are where S-/I- reach zero; ``plateau_knot`` is where
    I+ switches from the exponential to the plateau ``I0``.
    """

    S0: float
    I0: float
    M1: float
    M2: float
    eps1: float
    eps2: float
    lambda1: float

    @property
    def knot1(self) -> float:
        return math.log(1.0 / self.M1) / self.eps1

    @property
    def knot2(self) -> float:
        return math.log(1.0 / self.M2) / self.eps2

    @property
    def plateau_knot(self) -> float:
        return math.log(self.I0) / self.lambda1

    @property
    def kinks(self) -> tuple[float, float, float]:
        return (self.knot1, self.knot2, self.plateau_knot)

    def as_dict(self) -> dict:
        return {
            "S0": self.S0,
            "I0": self.I0,
            "M1": self.M1,
            "M2": self.M2,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "lambda1": self.lambda1,
            "knot1": self.knot1,
            "knot2": self.knot2,
            "plateau_knot": self.plateau_knot,
        }


def shift_bracket(p: ModelParams, eps: float) -> float:
    """e^{eps s} + e^{-eps s} + e^{eps k} + e^{-eps k} - 4."""
    a = math.sinh(0.5 * eps * p.sin)
    b = math.sinh(0.5 * eps * p.cos)
    return 4.0 * (a * a + b * b)


def lower_s_rate(p: ModelParams, c: float, eps: float) -> float:
    """The quantity that must be negative for the lower S envelope to work."""
    return p.d1 * shift_bracket(p, eps) - p.mu1 - c * eps


def _bisect_last_negative(f, lo: float, hi: float) -> float:
    # f(lo) < 0 <= f(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo


def select_envelope(p: ModelParams, c: float, roots: RootPair) -> EnvelopeParams:
    """Pick I0, eps1, M1, eps2, M2 so that all four envelope inequalities hold.

    eps1 is lambda1/2 unless that violates ``lower_s_rate < 0``, in which case
    half the largest admissible value is used.  eps2 starts at lambda1/2, is
    halved until delta(lambda1 + eps2) < 0, and is capped at eps1.  M2 has to
    dominate the whole nonlinear defect of the I equation,
    ``beta*S0*(M1*e^{eps1 xi} + alpha*e^{lambda1 xi})``, on xi < knot2 < 0;
    both exponentials are below one there, giving the bound used below.
    """
    lam1 = roots.lambda1
    S0 = p.S0
    I0 = upper_plateau(p)

    rate = lambda e: lower_s_rate(p, c, e)  # noqa: E731
    eps1 = 0.5 * lam1
    if rate(eps1) >= 0:
        eps1 = 0.5 * _bisect_last_negative(rate, 0.0, eps1)
    M1 = max(2.0, -p.beta / rate(eps1))

    eps2 = 0.5 * lam1
    while dispersion.delta(p, c, lam1 + eps2) >= 0:
        eps2 *= 0.5
        if eps2 < 1e-14 * lam1:
            raise ArithmeticError("no eps2 with delta(lambda1 + eps2) < 0")
    eps2 = min(eps2, eps1)
    d_shift = dispersion.delta(p, c, lam1 + eps2)
    M2 = max(2.0, 2.0 * p.beta * S0 * (M1 + p.alpha) / (-d_shift))
    return EnvelopeParams(S0=S0, I0=I0, M1=M1, M2=M2, eps1=eps1, eps2=eps2, lambda1=lam1)


# --- envelope functions (vectorised) ---------------------------------------


def upper_S(env: EnvelopeParams, xi):
    return np.full_like(np.asarray(xi, dtype=float), env.S0)


def upper_I(env: EnvelopeParams, xi):
    xi = np.asarray(xi, dtype=float)
    # clip the exponent so the plateau branch never overflows
    return np.minimum(np.exp(np.minimum(env.lambda1 * xi, 700.0)), env.I0)


def lower_S(env: EnvelopeParams, xi):
    xi = np.asarray(xi, dtype=float)
    return np.maximum(env.S0 * (1.0 - env.M1 * np.exp(np.minimum(env.eps1 * xi, 700.0))), 0.0)


def lower_I(env: EnvelopeParams, xi):
    xi = np.asarray(xi, dtype=float)
    inner = 1.0 - env.M2 * np.exp(np.minimum(env.eps2 * xi, 700.0))
    return np.where(inner > 0, np.exp(np.minimum(env.lambda1 * xi, 700.0)) * inner, 0.0)


def upper_S_prime(env: EnvelopeParams, xi):
    return np.zeros_like(np.asarray(xi, dtype=float))


def upper_I_prime(env: EnvelopeParams, xi):
    xi = np.asarray(xi, dtype=float)
    e = np.exp(np.minimum(env.lambda1 * xi, 700.0))
    return np.where(xi < env.plateau_knot, env.lambda1 * e, 0.0)


def lower_S_prime(env: EnvelopeParams, xi):
    xi = np.asarray(xi, dtype=float)
    val = -env.S0 * env.M1 * env.eps1 * np.exp(np.minimum(env.eps1 * xi, 700.0))
    return np.where(xi < env.knot1, val, 0.0)


def lower_I_prime(env: EnvelopeParams, xi):
    xi = np.asarray(xi, dtype=float)
    l1, e2 = env.lambda1, env.eps2
    val = l1 * np.exp(np.minimum(l1 * xi, 700.0)) - env.M2 * (l1 + e2) * np.exp(np.minimum((l1 + e2) * xi, 700.0))
    return np.where(xi < env.knot2, val, 0.0)


def shifted_sum(p: ModelParams, fn, xi):
    """fn(xi+s) + fn(xi-s) + fn(xi+k) + fn(xi-k)."""
    s, k = p.sin, p.cos
    return fn(xi + s) + fn(xi - s) + fn(xi + k) + fn(xi - k)


# --- certification -----------------------------------------------------------


@dataclass
class InequalityResult:
    name: str
    sense: str  # ">=" or "<="
    min_residual: float
    max_residual: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "sense": self.sense,
            "min_residual": self.min_residual,
            "max_residual": self.max_residual,
            "n_violations": len(self.violations),
            "violations": self.violations[:50],
            "passed": self.passed,
        }


@dataclass
class CertificateReport:
    n_points: int
    n_excluded: int
    results: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    @property
    def n_violations(self) -> int:
        return sum(len(r.violations) for r in self.results.values())

    def as_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "n_excluded": self.n_excluded,
            "passed": self.passed,
            "n_violations": self.n_violations,
            "inequalities": {k: v.as_dict() for k, v in self.results.items()},
        }


def guarded_grid(env: EnvelopeParams, lo: float, hi: float, n: int) -> tuple[np.ndarray, int]:
    """Uniform grid on [lo, hi] minus a one-step guard band around each kink."""
    xi = np.linspace(lo, hi, n)
    step = (hi - lo) / (n - 1)
    keep = np.ones(n, dtype=bool)
    for kink in env.kinks:
        keep &= np.abs(xi - kink) > step
    return xi[keep], int(n - keep.sum())


def envelope_residuals(p: ModelParams, c: float, env: EnvelopeParams, xi: np.ndarray) -> dict:
    """Residuals (and term scales) of the four envelope inequalities at ``xi``.

    Each entry is ``(residual, scale)`` with the residual written as
    ``c u' - d J[u] - reaction`` so that (a), (b) should be >= 0 and
    (c), (d) <= 0.
    """
    Sp, Ip = upper_S(env, xi), upper_I(env, xi)
    Sm, Im = lower_S(env, xi), lower_I(env, xi)

    def residual(deriv, shifts, centre, d, *reaction):
        res = c * deriv - d * (shifts - 4.0 * centre) - sum(reaction)
        scale = np.abs(c * deriv) + d * (np.abs(shifts) + 4.0 * np.abs(centre))
        scale = scale + sum(np.abs(r) for r in reaction)
        return res, scale

    def incidence(S, I):
        return p.beta * S * I / (1.0 + p.alpha * I)

    def shifts(fn):
        return shifted_sum(p, lambda x: fn(env, x), xi)

    return {
        "a": residual(upper_S_prime(env, xi), shifts(upper_S), Sp, p.d1,
                      p.Lambda, -incidence(Sp, Im), -p.mu1 * Sp),
        "b": residual(upper_I_prime(env, xi), shifts(upper_I), Ip, p.d2,
                      incidence(Sp, Ip), -p.mu2 * Ip),
        "c": residual(lower_S_prime(env, xi), shifts(lower_S), Sm, p.d1,
                      p.Lambda, -incidence(Sm, Ip), -p.mu1 * Sm),
        "d": residual(lower_I_prime(env, xi), shifts(lower_I), Im, p.d2,
                      incidence(Sm, Im), -p.mu2 * Im),
    }


_SENSE = {"a": ">=", "b": ">=", "c": "<=", "d": "<="}
_NAMES = {
    "a": "upper S with lower I",
    "b": "upper I with upper S",
    "c": "lower S with upper I",
    "d": "lower I with lower S",
}


def _worker_count() -> int:
    raw = os.environ.get("LATTICE_WAVE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def verify_upper_lower(
    p: ModelParams,
    c: float,
    env: EnvelopeParams,
    grid: np.ndarray,
    rtol: float = RESIDUAL_RTOL,
) -> CertificateReport:
    """Evaluate all four envelope inequalities on ``grid`` and report violations.

    Points within one grid step of a kink should already be removed (see
    :func:`guarded_grid`).  A residual counts as a violation only when it has
    the wrong sign by more than ``rtol`` times the summed magnitude of its
    terms, which absorbs rounding where the inequality is tight.  The sweep is
    split into chunks evaluated on a thread pool and merged by min/max.
    """
    grid = np.asarray(grid, dtype=float)
    chunks = np.array_split(grid, max(1, min(_worker_count(), len(grid) // 1000 or 1)))

    def run(chunk):
        return chunk, envelope_residuals(p, c, env, chunk)

    if len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(chunks[0])]

    results = {}
    for key in "abcd":
        lo, hi, bad = math.inf, -math.inf, []
        for chunk, res in parts:
            r, scale = res[key]
            if r.size:
                lo = min(lo, float(r.min()))
                hi = max(hi, float(r.max()))
            slack = rtol * scale
            wrong = r < -slack if _SENSE[key] == ">=" else r > slack
            bad.extend(float(x) for x in chunk[wrong])
        results[key] = InequalityResult(_NAMES[key], _SENSE[key], lo, hi, sorted(bad))
    return CertificateReport(n_points=int(grid.size), n_excluded=0, results=results)


def certify_envelope(
    p: ModelParams, c: float, env: EnvelopeParams, lo: float = -200.0, hi: float = 200.0, n: int = 100_000
) -> CertificateReport:
    """Guard-banded sweep of :func:`verify_upper_lower` over [lo, hi]."""
    xi, excluded = guarded_grid(env, lo, hi, n)
    report = verify_upper_lower(p, c, env, xi)
    report.n_excluded = excluded
    return report
