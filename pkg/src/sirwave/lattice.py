"""Direct simulation of the SIR system on a rectangular patch of Z^2.

Each site carries (S, I, R) and couples to its four nearest neighbours
through the discrete Laplacian.  Time stepping is classical fixed-step RK4.
Fronts are tracked on the projection xi = i cos(theta) + j sin(theta), where
i is the row index and j the column index; the seed occupies small xi and the
front advances toward large xi.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import dispersion
from .errors import InsufficientSamplesError, NoFrontError, NumericAbort, ParameterError
from .model import ModelParams, basic_reproduction, equilibria, validate_params

CLAMP_WINDOW = 1e-12
CFL_LIMIT = 0.5


@dataclass
class LatticeState:
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray | None
    t: float = 0.0

    @property
    def Ni(self) -> int:
        return self.S.shape[0]

    @property
    def Nj(self) -> int:
        return self.S.shape[1]

    def copy(self) -> "LatticeState":
        return LatticeState(self.S.copy(), self.I.copy(), None if self.R is None else self.R.copy(), self.t)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Attributes:
        Ni, Nj: Lattice size (rows, columns).
        dt: RK4 step.
        t_end: Horizon.
        boundary: ``"copy"`` (replicate the edge value) or ``"periodic"``.
        init_shape: ``"half-plane"`` or ``"disk"``.
        init_level: Infected density placed on the seed set.
        seed_fraction: Share of sites in the half-plane seed.
        disk_radius: Radius of the disk seed (centred on the lattice).
        front_level: Tracking threshold; ``None`` means I*/2.
        record_every: Time between front samples.
        seed: RNG seed for the optional jitter of the seed level.
        jitter: Relative amplitude of that jitter (0 disables it).
        track_halfwidth: If set, the front is measured only on sites within
            this transverse distance of the lattice centre line.
        margin: Minimum distance (sites) between front and edges for a sample
            to enter the speed fit.
        window_fraction: Late-time share of samples used in the speed fit.
        integrate_r: Whether R is integrated at all (it feeds back nowhere).
        snapshot_every: Time between stored snapshots; ``None`` stores none.
    """

    Ni: int = 400
    Nj: int = 400
    dt: float = 0.05
    t_end: float = 80.0
    boundary: str = "copy"
    init_shape: str = "half-plane"
    init_level: float | None = None
    seed_fraction: float = 0.025
    disk_radius: float = 10.0
    front_level: float | None = None
    record_every: float = 1.0
    seed: int = 0
    jitter: float = 0.0
    track_halfwidth: float | None = 30.0
    margin: int = 20
    window_fraction: float = 0.5
    integrate_r: bool = True
    snapshot_every: float | None = None


@dataclass
class FrontTrace:
    times: np.ndarray
    positions: np.ndarray
    speed: float = math.nan
    fit_window: tuple = (math.nan, math.nan)
    r_squared: float = math.nan
    usable: np.ndarray | None = field(default=None, repr=False)


def validate_config(p: ModelParams, cfg: SimConfig, init_max_S: float | None = None) -> None:
    if cfg.Ni < 2 or cfg.Nj < 2:
        raise ParameterError("lattice needs at least 2x2 sites")
    if not (cfg.dt > 0 and math.isfinite(cfg.dt)):
        raise ParameterError(f"dt must be > 0, got {cfg.dt}")
    if not cfg.t_end > 0:
        raise ParameterError(f"t_end must be > 0, got {cfg.t_end}")
    if cfg.boundary not in ("copy", "periodic"):
        raise ParameterError(f"boundary must be 'copy' or 'periodic', got {cfg.boundary!r}")
    if cfg.init_shape not in ("half-plane", "disk"):
        raise ParameterError(f"init_shape must be 'half-plane' or 'disk', got {cfg.init_shape!r}")
    if not 0 < cfg.window_fraction <= 1:
        raise ParameterError("window_fraction must lie in (0, 1]")
    if cfg.record_every < cfg.dt:
        raise ParameterError("record_every must be at least dt")
    S_range = max(p.S0, init_max_S if init_max_S is not None else p.S0)
    rate = 4 * max(p.d1, p.d2, p.d3) + p.beta * S_range + max(p.mu1, p.mu2)
    if cfg.dt * rate >= CFL_LIMIT:
        raise ParameterError(f"dt*{rate:.4g} = {cfg.dt * rate:.4g} violates the stability guard < {CFL_LIMIT}")


def projection(Ni: int, Nj: int, theta: float) -> np.ndarray:
    i = np.arange(Ni, dtype=float)[:, None]
    j = np.arange(Nj, dtype=float)[None, :]
    return i * math.cos(theta) + j * math.sin(theta)


def transverse(Ni: int, Nj: int, theta: float) -> np.ndarray:
    """Coordinate along the front, measured from the lattice centre."""
    i = np.arange(Ni, dtype=float)[:, None] - 0.5 * (Ni - 1)
    j = np.arange(Nj, dtype=float)[None, :] - 0.5 * (Nj - 1)
    return -i * math.sin(theta) + j * math.cos(theta)


def _default_level(p: ModelParams) -> float:
    eq = equilibria(p)
    return eq.I_star if eq.I_star is not None else 1.0


def seed_mask(p: ModelParams, cfg: SimConfig) -> np.ndarray:
    if cfg.init_shape == "half-plane":
        proj = projection(cfg.Ni, cfg.Nj, p.theta)
        if not 0 < cfg.seed_fraction < 1:
            raise ParameterError("seed_fraction must lie in (0, 1)")
        cut = np.quantile(proj, cfg.seed_fraction)
        mask = proj < cut
    else:
        i = np.arange(cfg.Ni)[:, None] - 0.5 * (cfg.Ni - 1)
        j = np.arange(cfg.Nj)[None, :] - 0.5 * (cfg.Nj - 1)
        mask = i * i + j * j < cfg.disk_radius ** 2
    if not mask.any():
        raise ParameterError("seed set is empty")
    return mask


def init_lattice(p: ModelParams, cfg: SimConfig) -> LatticeState:
    """S = S0 everywhere, I = init_level on the seed set and 0 elsewhere, R = 0."""
    validate_params(p)
    validate_config(p, cfg)
    mask = seed_mask(p, cfg)
    level = _default_level(p) if cfg.init_level is None else cfg.init_level
    if level <= 0:
        raise ParameterError("init_level must be > 0")
    S = np.full((cfg.Ni, cfg.Nj), p.S0)
    I = np.zeros((cfg.Ni, cfg.Nj))
    if cfg.jitter > 0:
        rng = np.random.default_rng(cfg.seed)
        I[mask] = level * (1.0 + cfg.jitter * rng.uniform(-1, 1, int(mask.sum())))
    else:
        I[mask] = level
    R = np.zeros((cfg.Ni, cfg.Nj)) if cfg.integrate_r else None
    return LatticeState(S, I, R, 0.0)


def laplacian(u: np.ndarray, boundary: str) -> np.ndarray:
    """Four-neighbour discrete Laplacian over the last two axes."""
    if boundary == "periodic":
        return (
            np.roll(u, 1, -2) + np.roll(u, -1, -2) + np.roll(u, 1, -1) + np.roll(u, -1, -1) - 4.0 * u
        )
    # copy boundary: the missing neighbour takes the edge site's own value
    out = -4.0 * u
    out[..., 1:, :] += u[..., :-1, :]
    out[..., 0, :] += u[..., 0, :]
    out[..., :-1, :] += u[..., 1:, :]
    out[..., -1, :] += u[..., -1, :]
    out[..., :, 1:] += u[..., :, :-1]
    out[..., :, 0] += u[..., :, 0]
    out[..., :, :-1] += u[..., :, 1:]
    out[..., :, -1] += u[..., :, -1]
    return out


def _rhs(p: ModelParams, y: np.ndarray, boundary: str) -> np.ndarray:
    out = laplacian(y, boundary)
    for k, d in enumerate((p.d1, p.d2, p.d3)[: y.shape[0]]):
        out[k] *= d
    S, I = y[0], y[1]
    inc = p.beta * S * I
    inc /= 1.0 + p.alpha * I
    out[0] += p.Lambda - p.mu1 * S
    out[0] -= inc
    out[1] += inc
    out[1] -= p.mu2 * I
    if y.shape[0] == 3:
        out[2] += p.gamma * I - p.mu1 * y[2]
    return out


def _rk4(p: ModelParams, y: np.ndarray, dt: float, boundary: str) -> np.ndarray:
    k1 = _rhs(p, y, boundary)
    k2 = _rhs(p, y + 0.5 * dt * k1, boundary)
    k3 = _rhs(p, y + 0.5 * dt * k2, boundary)
    k4 = _rhs(p, y + dt * k3, boundary)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _stack(state: LatticeState) -> np.ndarray:
    parts = [state.S, state.I] if state.R is None else [state.S, state.I, state.R]
    return np.stack(parts)


def _guard(y: np.ndarray, t: float) -> np.ndarray:
    if not np.all(np.isfinite(y)):
        idx = np.argwhere(~np.isfinite(y))[0]
        raise NumericAbort(f"non-finite value at t={t:.6g}, component {idx[0]}, site ({idx[1]}, {idx[2]})")
    low = y.min()
    if low < -CLAMP_WINDOW:
        idx = np.unravel_index(int(np.argmin(y)), y.shape)
        raise NumericAbort(
            f"negative value {low:.3e} at t={t:.6g}, component {idx[0]}, site ({idx[1]}, {idx[2]})"
        )
    if low < 0:
        y = np.where(y < 0, 0.0, y)
    return y


def step(p: ModelParams, state: LatticeState, dt: float, boundary: str = "copy") -> LatticeState:
    """One RK4 step; tiny negatives (> -1e-12) are clamped to zero.

    Raises:
        NumericAbort: on non-finite values or negatives below the clamp window.
    """
    y = _guard(_rk4(p, _stack(state), dt, boundary), state.t + dt)
    R = y[2] if y.shape[0] == 3 else None
    return LatticeState(y[0], y[1], R, state.t + dt)


def front_position(
    state: LatticeState,
    theta: float,
    level: float,
    halfwidth: float | None = None,
    centre: float = 0.0,
) -> float:
    """Leading crossing of ``level`` by the bin-averaged infected profile.

    Sites are projected on xi = i cos(theta) + j sin(theta) and grouped in
    bins of width one; the result interpolates linearly between the centres
    (mean projections) of the last bin at or above ``level`` and the next one.
    With ``halfwidth`` only sites within that transverse distance of
    ``centre`` are used.

    Raises:
        NoFrontError: if I never crosses ``level`` from above.
    """
    proj = projection(state.Ni, state.Nj, theta)
    vals = state.I
    if halfwidth is not None:
        band = np.abs(transverse(state.Ni, state.Nj, theta) - centre) <= halfwidth
        proj, vals = proj[band], vals[band]
    proj = proj.ravel()
    vals = vals.ravel()
    if vals.size == 0:
        raise NoFrontError("no sites in the tracking band")
    bins = np.floor(proj - proj.min()).astype(np.int64)
    counts = np.bincount(bins)
    nonempty = counts > 0
    mean_I = np.bincount(bins, weights=vals)[nonempty] / counts[nonempty]
    mean_x = np.bincount(bins, weights=proj)[nonempty] / counts[nonempty]
    above = mean_I >= level
    if above.all() or not above.any():
        raise NoFrontError(f"I is everywhere {'above' if above.all() else 'below'} level {level:g}")
    cross = np.flatnonzero(above[:-1] & ~above[1:])
    if cross.size == 0:
        raise NoFrontError("no downward crossing of the tracking level")
    k = cross[-1]
    y0, y1 = mean_I[k], mean_I[k + 1]
    x0, x1 = mean_x[k], mean_x[k + 1]
    return float(x0 + (y0 - level) / (y0 - y1) * (x1 - x0))


def edge_distance(state: LatticeState, theta: float, xi: float, halfwidth: float | None, centre: float = 0.0) -> float:
    """Smallest distance (in sites) from the tracked front sites to the lattice edges."""
    proj = projection(state.Ni, state.Nj, theta)
    near = np.abs(proj - xi) <= 1.0
    if halfwidth is not None:
        near &= np.abs(transverse(state.Ni, state.Nj, theta) - centre) <= halfwidth
    if not near.any():
        return 0.0
    i, j = np.nonzero(near)
    return float(min(i.min(), j.min(), state.Ni - 1 - i.max(), state.Nj - 1 - j.max()))


def estimate_speed(trace: FrontTrace, window_fraction: float = 0.5) -> tuple[float, float]:
    """Least-squares slope of front position against time over the late window.

    Only samples flagged usable (if the trace carries flags) enter the fit.

    Raises:
        InsufficientSamplesError: with fewer than 10 samples in the window.
    """
    t = np.asarray(trace.times, dtype=float)
    x = np.asarray(trace.positions, dtype=float)
    ok = np.isfinite(x)
    if trace.usable is not None:
        ok &= np.asarray(trace.usable, dtype=bool)
    if t.size == 0:
        raise InsufficientSamplesError("empty trace")
    t_lo = t[0] + (1.0 - window_fraction) * (t[-1] - t[0])
    sel = ok & (t >= t_lo - 1e-12)
    if sel.sum() < 10:
        raise InsufficientSamplesError(f"{int(sel.sum())} usable samples in the fit window, need 10")
    ts, xs = t[sel], x[sel]
    slope, intercept = np.polyfit(ts, xs, 1)
    fitted = slope * ts + intercept
    ss_res = float(np.sum((xs - fitted) ** 2))
    ss_tot = float(np.sum((xs - xs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    trace.speed, trace.r_squared, trace.fit_window = float(slope), r2, (float(ts[0]), float(ts[-1]))
    return float(slope), r2


def run(p: ModelParams, cfg: SimConfig, initial: LatticeState | None = None):
    """Integrate to ``t_end``, sampling the front every ``record_every``.

    Returns (snapshots, trace, summary).  The speed fit is attempted only when
    enough usable samples exist; otherwise the summary records why.
    """
    validate_params(p)
    state = init_lattice(p, cfg) if initial is None else initial.copy()
    validate_config(p, cfg, float(state.S.max()))
    if not cfg.integrate_r:
        state.R = None
    level = cfg.front_level if cfg.front_level is not None else 0.5 * _default_level(p)
    n_steps = int(round(cfg.t_end / cfg.dt))
    per_record = max(1, int(round(cfg.record_every / cfg.dt)))
    per_snap = None if cfg.snapshot_every is None else max(1, int(round(cfg.snapshot_every / cfg.dt)))

    times, positions, usable, max_I = [], [], [], []
    snapshots = [state.copy()] if per_snap else []

    def sample(st: LatticeState):
        times.append(st.t)
        max_I.append(float(st.I.max()))
        try:
            xi = front_position(st, p.theta, level, cfg.track_halfwidth)
        except NoFrontError:
            positions.append(math.nan)
            usable.append(False)
            return
        positions.append(xi)
        usable.append(edge_distance(st, p.theta, xi, cfg.track_halfwidth) >= cfg.margin)

    sample(state)
    for n in range(1, n_steps + 1):
        try:
            state = step(p, state, cfg.dt, cfg.boundary)
        except NumericAbort as exc:
            raise NumericAbort(f"step {n}: {exc}") from exc
        state.t = n * cfg.dt
        if n % per_record == 0:
            sample(state)
        if per_snap and n % per_snap == 0:
            snapshots.append(state.copy())

    trace = FrontTrace(np.array(times), np.array(positions), usable=np.array(usable, dtype=bool))
    summary = {
        "front_level": level,
        "t_end": state.t,
        "final_max_I": float(state.I.max()),
        "extinct": bool(state.I.max() < 1e-8),
        "n_samples": len(times),
        "n_usable": int(np.sum(usable)),
    }
    try:
        speed, r2 = estimate_speed(trace, cfg.window_fraction)
        summary.update(speed=speed, r_squared=r2, fit_window=list(trace.fit_window))
    except InsufficientSamplesError as exc:
        summary.update(speed=None, r_squared=None, fit_window=None, fit_error=str(exc))
    if basic_reproduction(p) > 1:
        c_star = dispersion.find_critical(p).c_star
        summary["c_star"] = c_star
        summary["ratio"] = summary["speed"] / c_star if summary["speed"] is not None else None
    summary["max_I_history"] = max_I
    return snapshots, trace, summary


def front_shaped_state(p: ModelParams, cfg: SimConfig, rate: float) -> LatticeState:
    """Endemic plateau behind the seed line, decaying like e^{-rate*(xi - xi0)} ahead of it."""
    eq = equilibria(p)
    proj = projection(cfg.Ni, cfg.Nj, p.theta)
    xi0 = np.quantile(proj, cfg.seed_fraction)
    shape = np.exp(-rate * np.maximum(proj - xi0, 0.0))
    shape[shape < 1e-300] = 0.0
    I = eq.I_star * shape
    S = p.S0 - (p.S0 - eq.S_star) * shape
    R = p.gamma * eq.I_star / p.mu1 * shape if cfg.integrate_r else None
    return LatticeState(S, I, R, 0.0)


def nonexistence_probe(p: ModelParams, c_test: float, cfg: SimConfig | None = None, n_lambda: int = 2000) -> dict:
    """Corroborate that no wave travels at the subcritical speed ``c_test``.

    Two checks: the characteristic function stays positive at ``c_test``
    (minimum over lambda and over a lambda grid), and a lattice front started
    from a steep front-shaped profile outruns ``c_test``.
    """
    validate_params(p)
    if basic_reproduction(p) <= 1:
        raise ParameterError("nonexistence probe needs R0 > 1")
    crit = dispersion.find_critical(p)
    if not 0 < c_test < crit.c_star:
        raise ParameterError(f"c_test = {c_test} must lie in (0, c* = {crit.c_star})")
    cfg = cfg or SimConfig(Ni=200, Nj=200, t_end=40.0, track_halfwidth=20.0)
    lam_min, delta_min = dispersion.min_delta(p, c_test)
    lam_top = min(dispersion.EXP_LIMIT / max(p.sin, p.cos, 1e-300), 20.0 * crit.lambda_star)
    grid = np.linspace(0.0, lam_top, n_lambda)[1:]
    grid_min = float(np.min(dispersion.delta(p, c_test, grid)))
    initial = front_shaped_state(p, cfg, rate=2.0 * crit.lambda_star)
    _, trace, summary = run(p, cfg, initial)
    speed = summary["speed"]
    outruns = speed is not None and speed > c_test
    return {
        "c_test": c_test,
        "c_star": crit.c_star,
        "min_delta": delta_min,
        "argmin_lambda": lam_min,
        "grid_min_delta": grid_min,
        "delta_positive": delta_min > 0 and grid_min > 0,
        "observed_speed": speed,
        "r_squared": summary["r_squared"],
        "speed_margin": None if speed is None else speed - c_test,
        "speed_over_c_star": None if speed is None else speed / crit.c_star,
        "front_outruns": outruns,
        "passed": bool(delta_min > 0 and grid_min > 0 and outruns),
        "trace": trace,
    }


# --- snapshot files ------------------------------------------------------------

_HEADER = struct.Struct("<qqd")


def snapshot_bytes(state: LatticeState) -> bytes:
    """Little-endian int64 Ni, Nj, float64 t, then row-major float64 S, I, R."""
    R = state.R if state.R is not None else np.zeros_like(state.S)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in (state.S, state.I, R))
    return _HEADER.pack(state.Ni, state.Nj, state.t) + body


def snapshot_from_bytes(data: bytes) -> LatticeState:
    Ni, Nj, t = _HEADER.unpack_from(data, 0)
    n = Ni * Nj
    arr = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if arr.size != 3 * n:
        raise ValueError(f"snapshot body has {arr.size} values, expected {3 * n}")
    S, I, R = (arr[k * n:(k + 1) * n].reshape(Ni, Nj).astype(float) for k in range(3))
    return LatticeState(S, I, R, t)


def transposed(cfg: SimConfig) -> SimConfig:
    return replace(cfg, Ni=cfg.Nj, Nj=cfg.Ni)
