"""Per-mode experiment runners and the full pipeline.

Each stage fills a :class:`RunResult` with numbers, certificates and tables.
Stages share intermediate products (critical pair, envelope, profile) through
a small context object so the full pipeline computes each of them once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import bounds, dispersion, lattice, lyapunov, profile
from .config import ExperimentConfig
from .errors import NoEndemicEquilibrium, NumericAbort, ParameterError, SubcriticalSpeedError
from .model import basic_reproduction, equilibria
from .report import Certificate, RunResult, emit_report

BOUNDARY_TOL = 1e-3
RIGHT_END_RTOL = 0.05
AGREEMENT_SHARE = 0.99


@dataclass
class _Context:
    cfg: ExperimentConfig
    crit: dispersion.CriticalPair | None = None
    c: float | None = None
    roots: dispersion.RootPair | None = None
    env: bounds.EnvelopeParams | None = None
    grid: profile.ProfileGrid | None = None

    @property
    def p(self):
        return self.cfg.params

    @property
    def n(self):
        return self.cfg.numerics

    def critical(self):
        if self.crit is None:
            self.crit = dispersion.find_critical(self.p)
            self.c = self.n.speed_factor * self.crit.c_star
        return self.crit

    def envelope(self):
        if self.env is None:
            crit = self.critical()
            self.roots = dispersion.find_roots(self.p, self.c, crit)
            self.env = bounds.select_envelope(self.p, self.c, self.roots)
        return self.env


def sign_pattern_mismatches(p, c, roots, lam) -> int:
    """Count lambdas where delta's sign contradicts + outside (l1, l2), - inside."""
    vals = dispersion.delta(p, c, lam)
    inside = (lam > roots.lambda1) & (lam < roots.lambda2)
    tol = dispersion.tolerance(p)
    bad = (inside & (vals > tol)) | (~inside & (vals < -tol))
    return int(bad.sum())


def dispersion_stage(ctx: _Context, res: RunResult) -> None:
    p = ctx.p
    eq = equilibria(p)
    res.results["equilibria"] = {"S0": eq.S0, "R0": eq.R0, "S_star": eq.S_star, "I_star": eq.I_star}
    crit = ctx.critical()
    c = ctx.c
    roots = dispersion.find_roots(p, c, crit)
    ctx.roots = roots
    tol = dispersion.tolerance(p)
    res.results["dispersion"] = {
        "c_star": crit.c_star,
        "lambda_star": crit.lambda_star,
        "c": c,
        "lambda1": roots.lambda1,
        "lambda2": roots.lambda2,
        "speed_class": dispersion.classify_speed(p, c).value,
    }
    res.add(Certificate("dispersion.critical_value", abs(crit.min_value), tol))
    res.add(Certificate("dispersion.critical_slope", abs(crit.slope_value), tol))
    res.add(Certificate("dispersion.root1_residual", abs(dispersion.delta(p, c, roots.lambda1)), tol))
    res.add(Certificate("dispersion.root2_residual", abs(dispersion.delta(p, c, roots.lambda2)), tol))
    res.check("dispersion.root_order", 0 < roots.lambda1 < crit.lambda_star < roots.lambda2)
    lam = np.linspace(0.0, 2.0 * roots.lambda2, 1001)[1:]
    res.add(Certificate("dispersion.sign_pattern_mismatches", float(sign_pattern_mismatches(p, c, roots, lam)), 0.0))
    res.table("dispersion", lam, dispersion.delta(p, c, lam), dispersion.delta(p, crit.c_star, lam))


def bounds_stage(ctx: _Context, res: RunResult) -> None:
    p, n = ctx.p, ctx.n
    env = ctx.envelope()
    rep = bounds.certify_envelope(p, ctx.c, env, n.envelope_lo, n.envelope_hi, n.envelope_points)
    res.results["envelope"] = env.as_dict()
    res.results["envelope_certificate"] = rep.as_dict()
    res.add(Certificate("bounds.envelope_violations", float(rep.n_violations), 0.0))
    xi = np.linspace(n.envelope_lo, n.envelope_hi, 4001)
    res.table("envelope", xi, bounds.upper_S(env, xi), bounds.upper_I(env, xi),
              bounds.lower_S(env, xi), bounds.lower_I(env, xi))
    xg, _ = bounds.guarded_grid(env, n.envelope_lo, n.envelope_hi, 4001)
    r = bounds.envelope_residuals(p, ctx.c, env, xg)
    res.table("envelope_residuals", xg, *(r[k][0] for k in "abcd"))


def profile_stage(ctx: _Context, res: RunResult) -> None:
    p, n = ctx.p, ctx.n
    env = ctx.envelope()
    c = ctx.c
    eq = equilibria(p)
    grid, ext, solutions = profile.extend_domain(p, c, env, n.X_list, n.h, n.tol, n.maxit)
    ctx.grid = grid
    reports = ext.reports
    res.results["profile"] = {
        "c": c,
        "extension": ext.as_dict(),
        "left_end": {"S": float(grid.S[0]), "I": float(grid.I[0])},
        "right_end": {"S": float(grid.S[-1]), "I": float(grid.I[-1])},
    }
    res.add(Certificate("profile.converged", float(sum(r.converged for r in reports)), float(len(reports)), ">="))
    res.add(Certificate("profile.residual", reports[-1].residual, n.residual_tol))
    res.add(Certificate("profile.envelope_escape", max(r.max_escape for r in reports), reports[-1].escape_limit))
    if len(reports) > 1:
        res.check("profile.cauchy", ext.cauchy)
    res.add(Certificate("profile.left_S_gap", abs(grid.S[0] - env.S0), BOUNDARY_TOL))
    res.add(Certificate("profile.left_I", float(grid.I[0]), BOUNDARY_TOL))
    right = max(abs(grid.S[-1] - eq.S_star) / eq.S_star, abs(grid.I[-1] - eq.I_star) / eq.I_star)
    res.add(Certificate("profile.right_end_rel_gap", float(right), RIGHT_END_RTOL))

    pos = profile.positivity_check(grid)
    der = profile.derivative_bounds_check(p, c, grid)
    rat = profile.ratio_bounds_check(p, c, grid)
    res.results["positivity"] = pos
    res.results["derivative_bounds"] = der
    res.results["ratio_bounds"] = rat
    res.add(Certificate("profile.positivity_violations", float(pos["n_violations"]), 0.0))
    res.add(Certificate("profile.derivative_bound_violations", float(der["n_violations"]), 0.0))
    res.add(Certificate("profile.ratio_bound_violations", float(rat["n_violations"]), 0.0))

    s_values = [f * env.lambda1 for f in n.laplace_fractions]
    lap = profile.laplace_identity_check(p, c, grid, s_values, n.laplace_rtol)
    res.results["laplace"] = lap
    worst = max(r["rel_error"] for r in lap["samples"])
    res.add(Certificate("profile.laplace_rel_error", worst, n.laplace_rtol))
    res.table("laplace", [r["s"] for r in lap["samples"]], [r["lhs"] for r in lap["samples"]],
              [r["rhs"] for r in lap["samples"]], [r["rel_error"] for r in lap["samples"]])
    xs = grid.xs
    rS, rI = profile.residual_profile(p, c, grid)
    # NaN marks nodes too close to either end for the residual stencil
    res.table("profile", xs, grid.S, grid.I, bounds.upper_S(env, xs), bounds.lower_S(env, xs),
              bounds.upper_I(env, xs), bounds.lower_I(env, xs), np.fmax(np.abs(rS), np.abs(rI)))


def lyapunov_stage(ctx: _Context, res: RunResult) -> None:
    p, n = ctx.p, ctx.n
    if ctx.grid is None:
        env = ctx.envelope()
        ctx.grid, _, _ = profile.extend_domain(p, ctx.c, env, n.X_list, n.h, n.tol, n.maxit)
    eq = equilibria(p)
    trace = lyapunov.lyapunov_trace(p, ctx.c, eq, ctx.grid)
    rep = lyapunov.monotonicity_report(trace, h=n.h)
    res.results["lyapunov"] = rep
    res.add(Certificate("lyapunov.monotone_share", rep["compliant_fraction"], 1.0, ">="))
    res.add(Certificate("lyapunov.agreement_share", rep["agreement_fraction"], AGREEMENT_SHARE, ">="))
    res.table("lyapunov", trace.xs, trace.L, trace.dL_analytic, trace.dL_numeric)


def sim_config(ctx: _Context, probe: bool = False) -> lattice.SimConfig:
    n = ctx.n
    return lattice.SimConfig(
        Ni=n.probe_Ni if probe else n.Ni,
        Nj=n.probe_Nj if probe else n.Nj,
        dt=n.dt,
        t_end=n.probe_t_end if probe else n.t_end,
        boundary=n.boundary,
        init_shape="half-plane" if probe else n.init_shape,
        seed_fraction=n.seed_fraction,
        disk_radius=n.disk_radius,
        front_level=n.front_level,
        record_every=n.record_every,
        track_halfwidth=n.track_halfwidth,
        margin=n.margin,
        window_fraction=n.window_fraction,
        snapshot_every=None if probe else n.snapshot_every,
    )


def simulate_stage(ctx: _Context, res: RunResult) -> None:
    p, n = ctx.p, ctx.n
    cfg = sim_config(ctx)
    snaps, trace, summary = lattice.run(p, cfg)
    summary.pop("max_I_history", None)
    res.results["simulation"] = summary
    res.table("front_trace", trace.times, trace.positions)
    res.snapshots = [(f"snapshot_{k:04d}.bin", lattice.snapshot_bytes(s)) for k, s in enumerate(snaps)]
    if basic_reproduction(p) > 1:
        ratio = summary.get("ratio")
        gap = abs(ratio - 1.0) if ratio is not None else math.nan
        r2 = summary["r_squared"] if summary["r_squared"] is not None else math.nan
        res.add(Certificate("simulate.speed_rel_gap", gap, n.speed_rtol))
        res.add(Certificate("simulate.r_squared", r2, n.min_r_squared, ">="))
    else:
        res.add(Certificate("simulate.final_max_I", summary["final_max_I"], 1e-8))


def probe_stage(ctx: _Context, res: RunResult) -> None:
    p, n = ctx.p, ctx.n
    crit = ctx.critical()
    c_test = n.c_test_factor * crit.c_star
    rep = lattice.nonexistence_probe(p, c_test, sim_config(ctx, probe=True))
    trace = rep.pop("trace")
    res.results["nonexistence_probe"] = rep
    res.table("probe_trace", trace.times, trace.positions)
    res.add(Certificate("probe.min_delta", rep["min_delta"], 0.0, ">="))
    res.add(Certificate("probe.grid_min_delta", rep["grid_min_delta"], 0.0, ">="))
    margin = rep["speed_margin"] if rep["speed_margin"] is not None else math.nan
    res.add(Certificate("probe.speed_margin", margin, 0.0, ">="))


STAGES = {
    "dispersion": (dispersion_stage,),
    "verify-bounds": (bounds_stage,),
    "profile": (profile_stage,),
    "lyapunov": (lyapunov_stage,),
    "simulate": (simulate_stage,),
    "probe-nonexistence": (probe_stage,),
    "full-pipeline": (dispersion_stage, bounds_stage, profile_stage, lyapunov_stage, simulate_stage, probe_stage),
}

# precondition failures are certificate failures (exit 1); bad numerics are
# usage errors (exit 2); simulation blow-ups are numeric aborts (exit 3)
_ERROR_CODES = (
    (NoEndemicEquilibrium, 1),
    (SubcriticalSpeedError, 1),
    (NumericAbort, 3),
    (ParameterError, 2),
)


def run_mode(cfg: ExperimentConfig) -> RunResult:
    """Run every stage of ``cfg.mode``; errors are recorded, not raised."""
    res = RunResult(mode=cfg.mode, config=cfg.as_dict())
    ctx = _Context(cfg)
    for stage in STAGES[cfg.mode]:
        try:
            stage(ctx, res)
        except tuple(e for e, _ in _ERROR_CODES) as exc:
            code = next(c for e, c in _ERROR_CODES if isinstance(exc, e))
            res.error = f"{type(exc).__name__}: {exc}"
            res.error_code = code
            break
    return res


def run_pipeline(cfg: ExperimentConfig, out_dir=None) -> int:
    """Run ``cfg``, write its report and return the exit code."""
    res = run_mode(cfg)
    emit_report(res, out_dir or cfg.output_dir, plots=cfg.emit_plots)
    return res.exit_code
