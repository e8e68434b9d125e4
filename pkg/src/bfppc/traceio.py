"""CSV persistence of simulation traces."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .engine import SimTrace

DIGITS = 12


def trace_columns(n: int) -> list[str]:
    cols = ["t"]
    for group in ("x", "qx", "e", "eq"):
        cols += [f"{group}{i}" for i in range(1, n + 1)]
    cols += [f"alpha{i}" for i in range(1, n)]
    cols += ["u", "sigma", "rho", "env_lo", "env_hi", "yd"]
    return cols


def trace_matrix(trace: SimTrace) -> np.ndarray:
    # adding 0.0 turns -0.0 into 0.0 so the CSV never shows "-0"
    return 0.0 + np.column_stack(
        [trace.t, trace.x, trace.qx, trace.e, trace.eq, trace.alpha, trace.u, trace.sigma, trace.rho,
         trace.env_lo, trace.env_hi, trace.yd]
    )


def write_trace_csv(trace: SimTrace, path: str | Path) -> Path:
    """Comma-separated, header row, 12 significant digits."""
    path = Path(path)
    n = trace.n
    fmt = [f"%.{DIGITS}g"] * len(trace_columns(n))
    fmt[1 + 4 * n + (n - 1) + 1] = "%d"  # sigma
    row = ",".join(fmt)
    lines = [",".join(trace_columns(n))]
    lines += [row % tuple(r) for r in trace_matrix(trace).tolist()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trace_csv(path: str | Path) -> SimTrace:
    path = Path(path)
    with path.open(newline="") as fh:
        header = next(csv.reader(fh))
    n = sum(1 for c in header if c.startswith("qx"))
    if header != trace_columns(n):
        raise ValueError(f"{path}: unexpected columns {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    col = {name: j for j, name in enumerate(header)}

    def block(prefix: str, count: int) -> np.ndarray:
        if count == 0:
            return np.zeros((len(data), 0))
        j = col[f"{prefix}1"]
        return data[:, j : j + count].copy()

    return SimTrace(
        t=data[:, col["t"]].copy(),
        x=block("x", n),
        qx=block("qx", n),
        e=block("e", n),
        eq=block("eq", n),
        alpha=block("alpha", n - 1),
        u=data[:, col["u"]].copy(),
        sigma=data[:, col["sigma"]].astype(int),
        rho=data[:, col["rho"]].copy(),
        env_lo=data[:, col["env_lo"]].copy(),
        env_hi=data[:, col["env_hi"]].copy(),
        yd=data[:, col["yd"]].copy(),
    )
