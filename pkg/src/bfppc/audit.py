"""Sampling audits of the design side conditions.

Every check here evaluates an inequality on a finite grid and reports the
worst point found.  A pass means no sampled point violates the inequality;
nothing is claimed between grid points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import SimTrace
from .quantizer import QuantizerModel, quantize
from .regulator import RegulationControllerConfig, regulation_control

SAMPLING_NOTE = "grid sampling audit, not a proof"
DEFAULT_AXIS_POINTS = 21


@dataclass
class AuditReport:
    check: str
    domain: str
    worst_residual: float
    location: object
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        loc = self.location
        if isinstance(loc, np.ndarray):
            loc = loc.tolist()
        elif isinstance(loc, tuple):
            loc = list(loc)
        return {
            "check": self.check,
            "domain": self.domain,
            "worst_residual": _json_float(self.worst_residual),
            "location": loc,
            "pass": bool(self.passed),
            "details": self.details,
            "note": SAMPLING_NOTE,
        }


def _json_float(v: float):
    v = float(v)
    return v if math.isfinite(v) else None


def default_axes(upper: Sequence[float], points: int = DEFAULT_AXIS_POINTS) -> list[np.ndarray]:
    """One linspace [0, u] per argument; a zero upper end becomes 1."""
    return [np.linspace(0.0, u if u > 0 else 1.0, points) for u in upper]


def _grid_points(axes: Sequence[np.ndarray], max_points: int, rng: np.random.Generator):
    sizes = [len(a) for a in axes]
    total = math.prod(sizes)
    if total <= max_points:
        return itertools.product(*[range(s) for s in sizes]), total, True
    idx = np.stack([rng.integers(0, s, size=max_points) for s in sizes], axis=1)
    return (tuple(row) for row in idx), max_points, False


def check_w_function(
    F: Callable[..., float],
    axes: Sequence[Sequence[float]],
    tol: float = 1e-9,
    max_points: int = 20_000,
    seed: int = 0,
    name: str = "w-function",
) -> AuditReport:
    """Monotonicity and positivity of F on a tensor grid.

    The partial in axis j at an interior grid index is the central difference
    between the two neighbouring grid values along that axis; it must be at
    least ``-tol``.  F must be positive wherever every argument is positive
    and nonnegative on the coordinate faces, where natural bounds such as
    ``z1**2 + z1*z2`` vanish; the value at the all-zero corner is reported
    separately.  Grids with more
    than ``max_points`` nodes are sampled at random nodes.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    k = len(axes)
    rng = np.random.default_rng(seed)
    nodes, count, exhaustive = _grid_points(axes, max_points, rng)
    cache: dict[tuple, float] = {}

    def at(index: tuple) -> float:
        v = cache.get(index)
        if v is None:
            v = float(F(*[axes[j][index[j]] for j in range(k)]))
            cache[index] = v
        return v

    worst_slope, worst_slope_at = math.inf, None
    worst_value, worst_value_at = math.inf, None
    worst_face = math.inf
    for index in nodes:
        index = tuple(int(i) for i in index)
        val = at(index)
        if not math.isfinite(val):
            raise ArithmeticError(f"{name} is not finite at {[axes[j][index[j]] for j in range(k)]}")
        if all(axes[j][index[j]] > 0 for j in range(k)):
            if val < worst_value:
                worst_value, worst_value_at = val, index
        elif val < worst_face:
            worst_face = val
        for j in range(k):
            if 0 < index[j] < len(axes[j]) - 1:
                up = index[:j] + (index[j] + 1,) + index[j + 1 :]
                dn = index[:j] + (index[j] - 1,) + index[j + 1 :]
                slope = (at(up) - at(dn)) / (axes[j][index[j] + 1] - axes[j][index[j] - 1])
                if slope < worst_slope:
                    worst_slope, worst_slope_at = slope, (index, j)
    origin = float(F(*[0.0] * k))
    mono_ok = bool(worst_slope >= -tol)
    pos_ok = bool(worst_value > 0 and worst_face >= 0)
    loc = None
    if worst_slope_at is not None:
        index, j = worst_slope_at
        loc = {"point": [float(axes[i][index[i]]) for i in range(k)], "axis": j}
    return AuditReport(
        check=name,
        domain=f"{'full' if exhaustive else 'sampled'} grid, {count} nodes, axes "
        + ", ".join(f"[{a[0]:g},{a[-1]:g}]x{len(a)}" for a in axes),
        worst_residual=float(worst_slope),
        location=loc,
        passed=mono_ok and pos_ok,
        details={
            "min_partial": _json_float(worst_slope),
            "min_value_interior": _json_float(worst_value),
            "min_value_on_faces": _json_float(worst_face),
            "min_value_at": None
            if worst_value_at is None
            else [float(axes[i][worst_value_at[i]]) for i in range(k)],
            "value_at_origin": origin,
            "monotone": mono_ok,
            "positive": pos_ok,
        },
    )


def audit_majorization(
    lhs_bound: Callable[..., float],
    rhs_target: Callable[..., float],
    axes: Sequence[Sequence[float]],
    name: str = "majorization",
) -> AuditReport:
    """Check lhs_bound >= rhs_target at every node of the grid."""
    axes = [np.asarray(a, dtype=float) for a in axes]
    worst, worst_at = math.inf, None
    rhs_max, rhs_max_at = -math.inf, None
    for point in itertools.product(*axes):
        lhs, rhs = float(lhs_bound(*point)), float(rhs_target(*point))
        if lhs - rhs < worst:
            worst, worst_at = lhs - rhs, point
        if rhs > rhs_max:
            rhs_max, rhs_max_at = rhs, point
    return AuditReport(
        check=name,
        domain="grid " + ", ".join(f"[{a[0]:g},{a[-1]:g}]x{len(a)}" for a in axes),
        worst_residual=worst,
        location=[float(v) for v in worst_at] if worst_at is not None else None,
        passed=worst >= 0,
        details={
            "max_violation": max(0.0, -worst),
            "rhs_max": rhs_max,
            "rhs_max_at": [float(v) for v in rhs_max_at] if rhs_max_at is not None else None,
        },
    )


def tanh_gap(M: float, eps: float, e):
    """M|e| - M e tanh(M e / eps); elementwise for arrays."""
    e = np.asarray(e, dtype=float)
    return M * np.abs(e) - M * e * np.tanh(M * e / eps)


def tanh_bound_check(
    M: float, eps: float, grid: Sequence[float] | None = None, bound: float = 0.3, points: int = 100_000
) -> AuditReport:
    """Check M|e| - M e tanh(M e/eps) <= bound*eps on a grid over e."""
    if not (M > 0 and eps > 0):
        raise ValueError("M and eps must be positive")
    span = 10.0 * eps / M
    if grid is None:
        grid = np.linspace(-span, span, points)
    grid = np.asarray(grid, dtype=float)
    if grid.min() > -span or grid.max() < span:
        raise ValueError(f"grid must cover [-{span:g}, {span:g}]")
    gap = tanh_gap(M, eps, grid)
    i = int(np.argmax(gap))
    worst = float(gap[i])
    return AuditReport(
        check="tanh bound",
        domain=f"e in [{grid[0]:g}, {grid[-1]:g}], {grid.size} points",
        worst_residual=bound * eps - worst,
        location=float(grid[i]),
        passed=worst <= bound * eps,
        details={"max_gap": worst, "max_gap_over_eps": worst / eps, "bound_over_eps": bound, "M": M, "eps": eps},
    )


def verify_envelope(
    trace: SimTrace,
    radii: Sequence[float],
    x1_0: float | None = None,
    y_d0: float | None = None,
) -> list[AuditReport]:
    """Per-channel containment |e_i| <= p_i, plus the output band recomputed from x1, yd and rho.

    The output band is ``rho(t)*(x1(0) - yd(0)) -/+ p_1`` around ``x1 - yd``;
    for regulation yd is zero.
    """
    reports = []
    n = trace.n
    for i in range(n):
        col = np.abs(trace.e[:, i])
        if col.size == 0:
            reports.append(AuditReport(f"envelope e{i + 1}", "empty trace", math.nan, None, False))
            continue
        k = int(np.argmax(col))
        slack = radii[i] - col
        bad = np.nonzero(slack < 0)[0]
        reports.append(
            AuditReport(
                check=f"envelope e{i + 1}",
                domain=f"{col.size} samples, t in [{trace.t[0]:g}, {trace.t[-1]:g}]",
                worst_residual=float(slack[k]),
                location=float(trace.t[bad[0]]) if bad.size else float(trace.t[k]),
                passed=bad.size == 0,
                details={
                    "radius": float(radii[i]),
                    "max_abs_e": float(col[k]),
                    "violations": int(bad.size),
                    "first_violation_time": float(trace.t[bad[0]]) if bad.size else None,
                },
            )
        )
    if len(trace):
        x1_0 = float(trace.x[0, 0]) if x1_0 is None else x1_0
        y_d0 = float(trace.yd[0]) if y_d0 is None else y_d0
        centre = trace.rho * (x1_0 - y_d0)
        err = trace.x[:, 0] - trace.yd
        slack = np.minimum(err - (centre - radii[0]), (centre + radii[0]) - err)
        bad = np.nonzero(slack < 0)[0]
        k = int(np.argmin(slack))
        reports.append(
            AuditReport(
                check="output band",
                domain=f"{len(trace)} samples",
                worst_residual=float(slack[k]),
                location=float(trace.t[bad[0]]) if bad.size else float(trace.t[k]),
                passed=bad.size == 0,
                details={"violations": int(bad.size), "half_width": float(radii[0])},
            )
        )
    return reports


def ppc_reference_control(k: float, rho_val: float, e: float) -> float | None:
    """Log-barrier control -k ln((1 + e/rho)/(1 - e/rho)).

    Returns None (singular) when |e/rho| >= 1 or rho <= 0 instead of raising.
    """
    if not rho_val > 0:
        return None
    z = e / rho_val
    if not abs(z) < 1:
        return None
    return -k * math.log((1.0 + z) / (1.0 - z))


def ppc_taylor(k: float, rho_val: float, e: float, terms: int = 3) -> float:
    """Odd-power truncation 2k(-z - z^3/3 - z^5/5 - ...) of the barrier control."""
    z = e / rho_val
    return 2.0 * k * -sum(z ** (2 * j + 1) / (2 * j + 1) for j in range(terms))


def singularity_demo(
    cfg: RegulationControllerConfig,
    quantizer: QuantizerModel,
    x0: Sequence[float],
    k: float = 1.0,
    sweep: int = 2001,
    rho_points: int = 50,
) -> AuditReport:
    """Barrier control versus the regulation law on reachable quantized errors.

    For rho in (0, delta0] the true first-stage error is swept over
    [-p1, p1] (the invariant box), the state is reconstructed as
    x1 = e1 + rho*x1(0) and quantized as the controller would see it.  The
    barrier law evaluated on the quantized error must hit its singularity at
    least once, while the regulation law stays finite on every such input.
    """
    p1 = cfg.p[0]
    singular = 0
    finite = 0
    example = None
    x_rest = [quantizer.level(v) for v in x0[1:]]
    for rho_val in np.linspace(quantizer.delta0 / rho_points, quantizer.delta0, rho_points):
        for e1 in np.linspace(-p1, p1, sweep):
            x1 = e1 + rho_val * x0[0]
            eq1 = quantize(quantizer, x1) - rho_val * cfg.q_x0[0]
            barrier = ppc_reference_control(k, float(rho_val), eq1)
            # regulation law on the same quantized measurement, time chosen so rho(t) = rho_val
            _, _, u = _regulation_at_rho(cfg, [quantize(quantizer, x1), *x_rest], float(rho_val))
            if math.isfinite(u):
                finite += 1
            if barrier is None:
                singular += 1
                if example is None:
                    example = {"rho": float(rho_val), "e1": float(e1), "eq1": float(eq1), "u_regulation": u}
    total = sweep * rho_points
    return AuditReport(
        check="barrier singularity contrast",
        domain=f"rho in (0, {quantizer.delta0:g}] x {rho_points}, e1 in [-{p1:g}, {p1:g}] x {sweep}",
        worst_residual=float(singular),
        location=example,
        passed=singular > 0 and finite == total,
        details={"singular_barrier_inputs": singular, "finite_regulation_inputs": finite, "inputs": total},
    )


def _regulation_at_rho(cfg: RegulationControllerConfig, q_x: Sequence[float], rho_val: float):
    from .regulator import _cascade

    return _cascade(cfg, q_x, cfg.q_x0, rho_val)


def regulation_bound_audits(
    cfg: RegulationControllerConfig, points: int = DEFAULT_AXIS_POINTS, max_points: int = 5_000
) -> list[AuditReport]:
    """W-function audit of every stage bound on its invariant box."""
    from .regulator import h0_arg_names, worst_case_args

    if cfg.H0 is None:
        return []
    out = []
    stages = cfg.stages
    for i in range(1, cfg.n + 1):
        upper = worst_case_args(i, cfg.n, cfg.pf.rho_max, cfg.pf.rho_dot_max, cfg.p, cfg.q_x0, cfg.delta0)
        h0 = cfg.H0[i - 1]
        up = stages[: i - 1]
        F = lambda *z, h0=h0, up=up: h0(z, up)  # noqa: E731
        rep = check_w_function(F, default_axes(upper, points), max_points=max_points, name=f"W-function H{i}^0")
        rep.details["arguments"] = h0_arg_names(i, cfg.n)
        out.append(rep)
    return out


def tracking_bound_audits(
    plant,
    pfs,
    reference,
    p: Sequence[float],
    F0_evals,
    upstream,
    rho_dot_bound: float | None = None,
    points: int = DEFAULT_AXIS_POINTS,
    max_points: int = 5_000,
) -> list[AuditReport]:
    """W-function audit of every tracking stage bound on its worst-case box."""
    from .tracker import f0_arg_names, f_star_args

    out = []
    n = plant.n
    for i in range(1, n + 1):
        upper = f_star_args(i, n, pfs, reference, p, plant.x0, rho_dot_bound)
        f0 = F0_evals[i - 1]
        up = list(upstream[: i - 1])
        F = lambda *z, f0=f0, up=up: f0(z, up)  # noqa: E731
        rep = check_w_function(F, default_axes(upper, points), max_points=max_points, name=f"W-function F{i}^0")
        rep.details["arguments"] = f0_arg_names(i, n)
        out.append(rep)
    return out


def time_varying_envelope(trace: SimTrace, cfg: RegulationControllerConfig) -> list[AuditReport]:
    """Containment in the tighter radii p_i(t); reported beside, not instead of, the constant check."""
    from .regulator import time_varying_radii

    radii = np.array([time_varying_radii(cfg, float(t)) for t in trace.t])
    out = []
    for i in range(trace.n):
        slack = radii[:, i] - np.abs(trace.e[:, i])
        k = int(np.argmin(slack))
        bad = int(np.count_nonzero(slack < 0))
        out.append(
            AuditReport(
                check=f"time-varying envelope e{i + 1} (informational)",
                domain=f"{len(trace)} samples",
                worst_residual=float(slack[k]),
                location=float(trace.t[k]),
                passed=bad == 0,
                details={"violations": bad, "radius_start": float(radii[0, i]), "radius_end": float(radii[-1, i])},
            )
        )
    return out
