"""SVG line plots of a simulation trace."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .engine import SimTrace  # noqa: E402

MAX_POINTS = 4000


def _stride(trace: SimTrace) -> slice:
    return slice(None, None, max(1, len(trace) // MAX_POINTS))


def _save(fig, path: Path) -> str:
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path.name


def write_figures(trace: SimTrace, scenario, out_dir: Path) -> list[str]:
    """Output vs. envelope, state vs. measured state, control input and (tracking) error vs. bounds."""
    s = _stride(trace)
    t = trace.t[s]
    names = []

    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(t, trace.x[s, 0], label="x1")
    if scenario.kind == "tracking":
        ax.plot(t, trace.yd[s], label="yd", color="k", lw=0.8)
    ax.plot(t, trace.env_lo[s], "--", color="gray", label="envelope")
    ax.plot(t, trace.env_hi[s], "--", color="gray")
    ax.set_xlabel("t (s)")
    ax.legend()
    names.append(_save(fig, out_dir / "output_envelope.svg"))

    fig, axes = plt.subplots(trace.n, 1, figsize=(7, 2.5 * trace.n), squeeze=False)
    for i, ax in enumerate(axes[:, 0]):
        ax.plot(t, trace.x[s, i], label=f"x{i + 1}")
        ax.step(t, trace.qx[s, i], where="post", label=f"measured x{i + 1}", lw=0.8)
        ax.legend()
    axes[-1, 0].set_xlabel("t (s)")
    names.append(_save(fig, out_dir / "states.svg"))

    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t, trace.u[s], label="u")
    ax.set_xlabel("t (s)")
    ax.legend()
    names.append(_save(fig, out_dir / "control.svg"))

    radii = scenario.radii
    fig, axes = plt.subplots(trace.n, 1, figsize=(7, 2.5 * trace.n), squeeze=False)
    for i, ax in enumerate(axes[:, 0]):
        ax.plot(t, trace.e[s, i], label=f"e{i + 1}")
        ax.axhline(radii[i], ls="--", color="gray", label="bound")
        ax.axhline(-radii[i], ls="--", color="gray")
        if scenario.kind == "tracking":
            thr = np.array([scenario.schedule.thresholds[m - 1][i] for m in trace.sigma[s]])
            ax.step(t, thr, where="post", ls=":", color="C3", label="active threshold")
        ax.legend()
    axes[-1, 0].set_xlabel("t (s)")
    names.append(_save(fig, out_dir / "error_bounds.svg"))
    return names
