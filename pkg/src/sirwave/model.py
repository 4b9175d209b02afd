"""Model parameters, equilibria and the basic reproduction number."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from .errors import NoEndemicEquilibrium, ParameterError

# relative residual tolerances used to certify the equilibria
S0_RESIDUAL_TOL = 1e-12
ENDEMIC_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Constants of the lattice SIR system plus the propagation direction.

    Attributes:
        d1, d2, d3: Nearest-neighbour diffusion rates of S, I and R.
        Lambda: Recruitment rate of susceptibles.
        beta: Transmission coefficient.
        alpha: Saturation constant of the incidence ``beta*S*I/(1+alpha*I)``.
        mu1: Mortality of S (and of R).
        mu2: Removal rate of I.
        gamma: Recovery rate (feeds R only).
        theta: Direction of propagation in radians.
    """

    d1: float = 1.0
    d2: float = 1.0
    d3: float = 1.0
    Lambda: float = 1.0
    beta: float = 2.0
    alpha: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0
    gamma: float = 0.5
    theta: float = math.pi / 4

    @property
    def sin(self) -> float:
        return math.sin(self.theta)

    @property
    def cos(self) -> float:
        return math.cos(self.theta)

    @property
    def S0(self) -> float:
        return self.Lambda / self.mu1

    def replace(self, **changes) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Equilibria:
    """Steady states derived from a parameter set.

    ``S_star``/``I_star`` are ``None`` when R0 <= 1.
    """

    S0: float
    R0: float
    S_star: float | None
    I_star: float | None


def validate_params(raw: ModelParams, profile_mode: bool = False) -> ModelParams:
    """Check every parameter constraint and return ``raw`` unchanged.

    With ``profile_mode`` the direction must lie in the open first quadrant,
    which the wave-profile, envelope and Lyapunov code relies on.
    """
    for f in fields(raw):
        value = getattr(raw, f.name)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ParameterError(f"{f.name} must be a real number, got {value!r}")
        if not math.isfinite(value):
            raise ParameterError(f"{f.name} must be finite, got {value!r}")
    for name in ("d1", "d2", "d3", "gamma"):
        if getattr(raw, name) < 0:
            raise ParameterError(f"{name} must be >= 0, got {getattr(raw, name)}")
    for name in ("Lambda", "beta", "alpha", "mu1", "mu2"):
        if getattr(raw, name) <= 0:
            raise ParameterError(f"{name} must be > 0, got {getattr(raw, name)}")
    # margin so that theta = pi/2 (cos ~ 6e-17) counts as on the axis
    if profile_mode and not (raw.sin > 1e-12 and raw.cos > 1e-12):
        raise ParameterError(
            f"theta={raw.theta} must lie strictly inside (0, pi/2) for profile computations"
        )
    return raw


def disease_free_equilibrium(p: ModelParams) -> float:
    """Return S0, the unique root of ``Lambda - mu1*S = 0``."""
    S0 = p.Lambda / p.mu1
    residual = p.Lambda - p.mu1 * S0
    if abs(residual) > S0_RESIDUAL_TOL * max(abs(p.Lambda), 1.0):
        raise ArithmeticError(f"disease-free residual {residual:.3e} above tolerance")
    return S0


def basic_reproduction(p: ModelParams) -> float:
    return p.beta * disease_free_equilibrium(p) / p.mu2


def endemic_residuals(p: ModelParams, S: float, I: float) -> tuple[float, float]:
    """Right-hand sides of the S and I steady-state equations at (S, I)."""
    incidence = p.beta * S * I / (1.0 + p.alpha * I)
    return p.Lambda - incidence - p.mu1 * S, incidence - p.mu2 * I


def endemic_equilibrium(p: ModelParams) -> tuple[float, float]:
    """Unique positive steady state (S*, I*), certified by back-substitution.

    Raises:
        NoEndemicEquilibrium: if R0 <= 1.
    """
    R0 = basic_reproduction(p)
    # the sign of I* is decided by this numerator; R0 itself can round to just
    # above 1 when the numerator is exactly 0
    excess = p.Lambda * p.beta - p.mu1 * p.mu2
    if R0 <= 1.0 or excess <= 0.0:
        raise NoEndemicEquilibrium(f"R0 = {R0:.6g} <= 1: no endemic equilibrium")
    I_star = excess / (p.mu2 * (p.beta + p.mu1 * p.alpha))
    S_star = p.mu2 * (1.0 + p.alpha * I_star) / p.beta
    r1, r2 = endemic_residuals(p, S_star, I_star)
    scale1 = max(p.Lambda, p.mu1 * S_star, p.mu2 * I_star)
    scale2 = max(p.mu2 * I_star, 1e-300)
    if abs(r1) > ENDEMIC_RESIDUAL_TOL * scale1 or abs(r2) > ENDEMIC_RESIDUAL_TOL * scale2:
        raise ArithmeticError(f"endemic residuals ({r1:.3e}, {r2:.3e}) above tolerance")
    return S_star, I_star


def equilibria(p: ModelParams) -> Equilibria:
    S0 = disease_free_equilibrium(p)
    R0 = basic_reproduction(p)
    try:
        S_star, I_star = endemic_equilibrium(p)
    except NoEndemicEquilibrium:
        S_star = I_star = None
    return Equilibria(S0=S0, R0=R0, S_star=S_star, I_star=I_star)


def upper_plateau(p: ModelParams) -> float:
    """Smallest admissible plateau I0 = (beta*S0 - mu2)/(alpha*mu2) of the upper I envelope."""
    return (p.beta * p.S0 - p.mu2) / (p.alpha * p.mu2)
