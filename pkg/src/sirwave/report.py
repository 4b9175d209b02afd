"""Result containers and deterministic file output.

Every run writes ``summary.json`` plus one CSV per table.  Files are written
to a temporary name in the target directory and renamed into place, so a
reader never sees a half-written file and re-runs overwrite atomically.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1"

_UMASK = os.umask(0)
os.umask(_UMASK)

# fixed CSV layouts, one per table name
COLUMNS = {
    "dispersion": ("lambda", "delta_c", "delta_c_star"),
    "envelope": ("xi", "S_upper", "I_upper", "S_lower", "I_lower"),
    "envelope_residuals": ("xi", "res_a", "res_b", "res_c", "res_d"),
    "profile": ("xi", "S", "I", "S_upper", "S_lower", "I_upper", "I_lower", "residual"),
    "laplace": ("s", "delta_times_transform", "defect_transform", "rel_error"),
    "lyapunov": ("xi", "L", "dL_analytic", "dL_numeric"),
    "front_trace": ("t", "xi_front"),
    "probe_trace": ("t", "xi_front"),
}


@dataclass
class Certificate:
    """A named pass/fail check with its measured value and threshold.

    ``sense`` is ``"<="`` when the value must not exceed the threshold and
    ``">="`` when it must reach it; ``margin`` is positive when passing.
    """

    name: str
    value: float
    threshold: float
    sense: str = "<="

    @property
    def passed(self) -> bool:
        if math.isnan(self.value):
            return False
        return self.value <= self.threshold if self.sense == "<=" else self.value >= self.threshold

    @property
    def margin(self) -> float:
        return self.threshold - self.value if self.sense == "<=" else self.value - self.threshold

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "threshold": self.threshold,
            "sense": self.sense,
            "margin": self.margin,
        }


@dataclass
class RunResult:
    mode: str
    config: dict
    results: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)  # (file name, bytes)
    error: str | None = None
    error_code: int = 0

    def add(self, cert: Certificate) -> Certificate:
        self.certificates.append(cert)
        return cert

    def check(self, name: str, ok: bool) -> Certificate:
        """Boolean certificate: value 1 for pass, 0 for fail."""
        return self.add(Certificate(name, 1.0 if ok else 0.0, 1.0, ">="))

    def table(self, name: str, *cols) -> None:
        self.tables[name] = np.column_stack([np.asarray(c, dtype=float) for c in cols])

    @property
    def first_failure(self) -> str | None:
        for c in self.certificates:
            if not c.passed:
                return c.name
        return None

    @property
    def exit_code(self) -> int:
        if self.error_code:
            return self.error_code
        return 1 if self.first_failure else 0


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def summary_dict(result: RunResult, files: list[str]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": result.mode,
        "status": "error" if result.error else ("pass" if result.exit_code == 0 else "fail"),
        "exit_code": result.exit_code,
        "first_failure": result.first_failure,
        "error": result.error,
        "certificates": [c.as_dict() for c in result.certificates],
        "results": result.results,
        "config": result.config,
        "files": files,
    }


def format_number(x: float) -> str:
    return format(float(x), ".17g")


def csv_text(columns, rows: np.ndarray) -> str:
    lines = [",".join(columns)]
    for row in np.atleast_2d(rows):
        lines.append(",".join(format_number(v) for v in row))
    return "\n".join(lines) + "\n"


def atomic_write(path: Path, data: bytes) -> None:
    """Write ``data`` to a temporary file beside ``path`` and rename it over."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        # mkstemp creates 0600; give the file the permissions open() would
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def emit_report(result: RunResult, out_dir, plots: bool = False) -> list[str]:
    """Write the summary JSON, table CSVs, snapshots and (optionally) PNG figures.

    Returns the written file names, relative to ``out_dir``, in sorted order.
    Filesystem errors propagate unchanged.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name in sorted(result.tables):
        cols = COLUMNS[name]
        rows = result.tables[name]
        if rows.shape[1] != len(cols):
            raise ValueError(f"table {name!r} has {rows.shape[1]} columns, expected {len(cols)}")
        atomic_write(out / f"{name}.csv", csv_text(cols, rows).encode())
        files.append(f"{name}.csv")
    if result.snapshots:
        (out / "snapshots").mkdir(exist_ok=True)
        for fname, data in result.snapshots:
            atomic_write(out / "snapshots" / fname, data)
            files.append(f"snapshots/{fname}")
    if plots and result.tables:
        from .plotting import render_tables

        files.extend(render_tables(result.tables, out))
    files = sorted(files) + ["summary.json"]
    text = json.dumps(_clean(summary_dict(result, files)), indent=2, sort_keys=False, allow_nan=False)
    atomic_write(out / "summary.json", (text + "\n").encode())
    return files
