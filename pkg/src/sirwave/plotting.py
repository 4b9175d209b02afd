"""PNG figures rendered from the report tables (Agg backend, no display)."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import COLUMNS, atomic_write  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.3,
    "savefig.dpi": 120,
}


def _col(rows, table, name):
    return rows[:, COLUMNS[table].index(name)]


def _dispersion(ax, rows):
    lam = _col(rows, "dispersion", "lambda")
    ax.plot(lam, _col(rows, "dispersion", "delta_c"), label="c")
    ax.plot(lam, _col(rows, "dispersion", "delta_c_star"), "--", label="c*")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$\Delta_c(\lambda)$")
    ax.legend()


def _envelope(ax, rows):
    xi = _col(rows, "envelope", "xi")
    for name, style in (("S_upper", "-"), ("S_lower", "--"), ("I_upper", "-"), ("I_lower", "--")):
        ax.plot(xi, _col(rows, "envelope", name), style, label=name)
    ax.set_xlabel(r"$\xi$")
    ax.legend()


def _residuals(ax, rows):
    xi = _col(rows, "envelope_residuals", "xi")
    for name in ("res_a", "res_b", "res_c", "res_d"):
        ax.plot(xi, _col(rows, "envelope_residuals", name), label=name)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.set_xlabel(r"$\xi$")
    ax.legend()


def _profile(ax, rows):
    xi = _col(rows, "profile", "xi")
    ax.plot(xi, _col(rows, "profile", "S"), label="S")
    ax.plot(xi, _col(rows, "profile", "I"), label="I")
    for name in ("S_lower", "I_lower", "I_upper"):
        ax.plot(xi, _col(rows, "profile", name), ":", lw=0.8, label=name)
    ax.set_ylim(-0.05, 1.1 * float(np.max(_col(rows, "profile", "S"))))
    ax.set_xlabel(r"$\xi$")
    ax.legend()


def _laplace(ax, rows):
    s = _col(rows, "laplace", "s")
    ax.semilogy(s, _col(rows, "laplace", "rel_error"), "o-")
    ax.set_xlabel("s")
    ax.set_ylabel("relative mismatch")


def _lyapunov(ax, rows):
    xi = _col(rows, "lyapunov", "xi")
    ax.plot(xi, _col(rows, "lyapunov", "L"), label="L")
    ax.plot(xi, _col(rows, "lyapunov", "dL_numeric"), label="dL (numeric)")
    ax.plot(xi, _col(rows, "lyapunov", "dL_analytic"), "--", label="dL (analytic)")
    ax.set_xlabel(r"$\xi$")
    ax.legend()


def _trace(table):
    def draw(ax, rows):
        t = _col(rows, table, "t")
        x = _col(rows, table, "xi_front")
        ax.plot(t, x, ".-", ms=3)
        ax.set_xlabel("t")
        ax.set_ylabel("front position")
    return draw


DRAWERS = {
    "dispersion": _dispersion,
    "envelope": _envelope,
    "envelope_residuals": _residuals,
    "profile": _profile,
    "laplace": _laplace,
    "lyapunov": _lyapunov,
    "front_trace": _trace("front_trace"),
    "probe_trace": _trace("probe_trace"),
}


def render_tables(tables: dict, out_dir) -> list[str]:
    """Render one PNG per known table; returns the file names written."""
    written = []
    with plt.rc_context(STYLE):
        for name in sorted(tables):
            draw = DRAWERS.get(name)
            if draw is None:
                continue
            fig, ax = plt.subplots()
            try:
                draw(ax, tables[name])
                ax.set_title(name.replace("_", " "))
                fig.tight_layout()
                buf = io.BytesIO()
                # no software tag keeps the bytes identical across runs
                fig.savefig(buf, format="png", metadata={"Software": None})
            finally:
                plt.close(fig)
            atomic_write(Path(out_dir) / f"{name}.png", buf.getvalue())
            written.append(f"{name}.png")
    return written
