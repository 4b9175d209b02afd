"""Characteristic function of the linearised infected equation.

For an exponential ansatz ``I = exp(lam*xi)`` the linearised wave equation at
the disease-free state reduces to ``delta(p, c, lam) = 0`` with

    delta = d2*(e^{lam s} + e^{-lam s} + e^{lam k} + e^{-lam k} - 4) - c*lam + beta*S0 - mu2,

``s = sin(theta)``, ``k = cos(theta)``.  The bracket is evaluated as
``4 sinh^2(lam s/2) + 4 sinh^2(lam k/2)``, which avoids the cancellation of
``e^x + e^-x - 2`` for small ``lam``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, DispersionRangeError, NoEndemicEquilibrium, ParameterError, SubcriticalSpeedError
from .model import ModelParams, basic_reproduction

EXP_LIMIT = 700.0
ROOT_TOL = 1e-9
MAX_DOUBLINGS = 200


class SpeedClass(str, enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class CriticalPair:
    c_star: float
    lambda_star: float
    min_value: float
    slope_value: float


@dataclass(frozen=True)
class RootPair:
    lambda1: float
    lambda2: float


def tolerance(p: ModelParams) -> float:
    """Absolute root tolerance, scaled by max(1, beta*S0)."""
    return ROOT_TOL * max(1.0, p.beta * p.S0)


def _check_range(p: ModelParams, lam) -> None:
    top = np.max(np.abs(lam)) * max(abs(p.sin), abs(p.cos))
    if top > EXP_LIMIT:
        raise DispersionRangeError(f"|lambda*max(sin, cos)| = {top:.4g} exceeds {EXP_LIMIT}")


def _bracket(p: ModelParams, lam):
    """e^{l s}+e^{-l s}+e^{l k}+e^{-l k}-4, cancellation free."""
    a = np.sinh(0.5 * lam * p.sin)
    b = np.sinh(0.5 * lam * p.cos)
    return 4.0 * (a * a + b * b)


def _slope_part(p: ModelParams, lam):
    """d/dlam of the d2-weighted bracket (no -c term)."""
    s, k = p.sin, p.cos
    return p.d2 * 2.0 * (s * np.sinh(lam * s) + k * np.sinh(lam * k))


def delta(p: ModelParams, c, lam):
    """Characteristic function; vectorised over ``c`` and ``lam``."""
    _check_range(p, lam)
    out = p.d2 * _bracket(p, lam) - c * lam + p.beta * p.S0 - p.mu2
    return out if np.ndim(out) else float(out)


def delta_dlambda(p: ModelParams, c, lam):
    _check_range(p, lam)
    out = _slope_part(p, lam) - c
    return out if np.ndim(out) else float(out)


def delta_d2lambda(p: ModelParams, lam):
    _check_range(p, lam)
    s, k = p.sin, p.cos
    out = p.d2 * 2.0 * (s * s * np.cosh(lam * s) + k * k * np.cosh(lam * k))
    return out if np.ndim(out) else float(out)


def _argmin_lambda(p: ModelParams, c: float) -> float:
    """Minimiser of delta in lam for fixed c > 0 (root of delta_dlambda).

    The slope part is increasing and convex on lam >= 0, so Newton started to
    the right of the root decreases monotonically; a bisection bracket guards
    against the rare step that leaves it.
    """
    lo, hi = 0.0, 1.0
    n = 0
    while _slope_part(p, hi) < c:
        lo, hi = hi, 2.0 * hi
        n += 1
        if n > MAX_DOUBLINGS:
            raise BracketError("could not bracket the minimiser of delta")
    lam = hi
    for _ in range(200):
        g = _slope_part(p, lam) - c
        if g > 0:
            hi = lam
        else:
            lo = lam
        dg = delta_d2lambda(p, lam)
        step = g / dg if dg > 0 else math.inf
        new = lam - step
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - lam) <= 4e-16 * max(1.0, lam):
            lam = new
            break
        lam = new
    return lam


def min_delta(p: ModelParams, c: float) -> tuple[float, float]:
    """Return (argmin, min) of lam -> delta(p, c, lam) over lam > 0."""
    if p.d2 <= 0:
        raise ParameterError("d2 must be > 0 for the dispersion minimum to exist")
    lam = float(_argmin_lambda(p, c))
    return lam, float(delta(p, c, lam))


def find_critical(p: ModelParams) -> CriticalPair:
    """Critical pair (c*, lambda*) where delta and its lam-derivative vanish.

    The minimum of delta over lam decreases strictly in c (its c-derivative is
    minus the minimiser), so c* is found by bisection once a sign change is
    bracketed by doubling an upper speed.
    """
    if basic_reproduction(p) <= 1.0:
        raise NoEndemicEquilibrium("R0 <= 1: no critical wave speed")
    if p.d2 <= 0:
        raise ParameterError("d2 must be > 0 for a finite critical speed")
    c_lo, c_hi = 0.0, 1.0
    n = 0
    while min_delta(p, c_hi)[1] >= 0:
        c_lo, c_hi = c_hi, 2.0 * c_hi
        n += 1
        if n > MAX_DOUBLINGS:
            raise BracketError("speed bracket expansion failed after 200 doublings")
    for _ in range(200):
        mid = 0.5 * (c_lo + c_hi)
        if mid <= c_lo or mid >= c_hi:
            break
        if min_delta(p, mid)[1] > 0:
            c_lo = mid
        else:
            c_hi = mid
    c_star = 0.5 * (c_lo + c_hi)
    lam_star, value = min_delta(p, c_star)
    slope = delta_dlambda(p, c_star, lam_star)
    tol = tolerance(p)
    if abs(value) > tol or abs(slope) > tol:
        raise ArithmeticError(
            f"critical pair not certified: delta={value:.3e}, slope={slope:.3e}"
        )
    return CriticalPair(c_star=c_star, lambda_star=lam_star, min_value=value, slope_value=float(slope))


def _bisect(f, lo: float, hi: float, flo: float) -> float:
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _polish(p: ModelParams, c: float, lam: float) -> float:
    """A couple of guarded Newton steps on delta."""
    for _ in range(3):
        d = delta(p, c, lam)
        dd = delta_dlambda(p, c, lam)
        if dd == 0:
            break
        new = lam - d / dd
        if abs(delta(p, c, new)) < abs(d):
            lam = new
        else:
            break
    return lam


def find_roots(p: ModelParams, c: float, critical: CriticalPair | None = None) -> RootPair:
    """Two positive roots lambda1 < lambda* < lambda2 of delta for c > c*.

    Raises:
        SubcriticalSpeedError: if c <= c*.
    """
    crit = critical or find_critical(p)
    if c <= crit.c_star:
        raise SubcriticalSpeedError(f"c = {c:.6g} is not above c* = {crit.c_star:.6g}")
    lam_star = crit.lambda_star
    f = lambda lam: delta(p, c, lam)  # noqa: E731
    if f(lam_star) >= 0:
        raise SubcriticalSpeedError(f"c = {c:.6g} too close to c* to separate the roots")
    lam1 = _polish(p, c, _bisect(f, 0.0, lam_star, f(0.0)))
    hi = 2.0 * lam_star
    n = 0
    while f(hi) <= 0:
        hi *= 2.0
        n += 1
        if n > MAX_DOUBLINGS:
            raise BracketError("could not bracket the larger root")
    lam2 = _polish(p, c, _bisect(f, lam_star, hi, f(lam_star)))
    tol = tolerance(p)
    if abs(f(lam1)) > tol or abs(f(lam2)) > tol:
        raise ArithmeticError("root residuals above tolerance")
    return RootPair(lambda1=float(lam1), lambda2=float(lam2))


def classify_speed(p: ModelParams, c: float) -> SpeedClass:
    """Classify c by the sign of min over lam of delta (band 1e-9, scaled)."""
    _, m = min_delta(p, c)
    tol = tolerance(p)
    if m > tol:
        return SpeedClass.SUBCRITICAL
    if m < -tol:
        return SpeedClass.SUPERCRITICAL
    return SpeedClass.CRITICAL
