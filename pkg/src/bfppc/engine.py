"""Fixed-step closed-loop simulation with sample-and-hold control."""

from __future__ import annotations

import math
import time
from array import array
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import BfppcError, DivergenceError
from .plant import PlantModel, derivative_fn
from .quantizer import QuantizerModel, quantize_state
from .regulator import RegulationControllerConfig
from .signals import rho as rho_of
from .tracker import SwitchSchedule, TrackingControllerConfig, switch_update, tracking_control

DIVERGENCE_LIMIT = 1e9
DEFAULT_STEP = 1e-4


def rk4_step(
    deriv: Callable[[Sequence[float], float], Sequence[float]], x: Sequence[float], t: float, h: float
) -> list[float]:
    """One classical Runge-Kutta step of size h."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    half = 0.5 * h
    k1 = deriv(x, t)
    k2 = deriv([xi + half * a for xi, a in zip(x, k1)], t + half)
    k3 = deriv([xi + half * b for xi, b in zip(x, k2)], t + half)
    k4 = deriv([xi + h * c for xi, c in zip(x, k3)], t + h)
    sixth = h / 6.0
    out = [xi + sixth * (a + 2.0 * b + 2.0 * c + d) for xi, a, b, c, d in zip(x, k1, k2, k3, k4)]
    if not math.isfinite(sum(out)):
        raise DivergenceError("non-finite state after integration step", t + h)
    return out


@dataclass
class Sample:
    """Controller output and diagnostics at one grid time."""

    u: float
    qx: Sequence[float]
    e: Sequence[float]
    eq: Sequence[float]
    alpha: Sequence[float]
    sigma: int
    rho: float
    env_lo: float
    env_hi: float
    yd: float


class Controller(Protocol):
    n: int
    kind: str

    def reset(self) -> None: ...

    def __call__(self, x: Sequence[float], t: float) -> Sample: ...


class RegulationRunner:
    """Quantized regulation loop; the true errors are recorded beside the quantized ones."""

    kind = "regulation"

    def __init__(self, cfg: RegulationControllerConfig, quantizer: QuantizerModel, x0: Sequence[float]):
        self.cfg = cfg
        self.n = cfg.n
        self.quantizer = quantizer.copy()
        self.x0 = tuple(x0)
        self._half = cfg.delta_M + cfg.eps[0]
        # (-gamma_i*H_i, c_i, N_i): -gamma*H*e evaluates as ((-gamma)*H)*e, so this is bit-identical
        self._laws = tuple((-g * hh, c, N) for g, hh, c, N in zip(cfg.gamma, cfg.H, cfg.c, cfg.N))

    def reset(self) -> None:
        self.quantizer.reset()

    def __call__(self, x: Sequence[float], t: float) -> Sample:
        # same arithmetic as regulation_control / regulation_errors / output_envelope,
        # with rho(t) evaluated once per sample and the stage gains folded
        cfg = self.cfg
        r = rho_of(cfg.pf, t)
        qx = quantize_state(self.quantizer, x)
        eq, alpha_q = self._cascade(qx, cfg.q_x0, r)
        u = alpha_q[-1]
        if not math.isfinite(u):
            raise DivergenceError(f"non-finite control from state {list(x)!r}")
        e = self._cascade(x, self.x0, r)[0]
        centre = r * self.x0[0]
        return Sample(u, qx, e, eq, alpha_q[:-1], 1, r, centre - self._half, centre + self._half, 0.0)

    def _cascade(self, x, x0, r):
        e, alpha = [], []
        prev = 0.0
        for xi, x0i, (kg, c, N) in zip(x, x0, self._laws):
            ei = xi - prev - r * x0i
            prev = kg * ei - c * ei**N
            e.append(ei)
            alpha.append(prev)
        return e, alpha

    def radii(self) -> list[float]:
        return list(self.cfg.p)


class TrackingRunner:
    """Tracking loop with the switched gain schedule (measurements unquantized)."""

    kind = "tracking"

    def __init__(self, cfg: TrackingControllerConfig, schedule: SwitchSchedule):
        self.base = cfg
        self.n = cfg.n
        self.schedule = schedule
        self._configs = [cfg.with_stage(st) for st in schedule.stages]
        self._offset = cfg.x0[0] - cfg.reference(0.0)

    def reset(self) -> None:
        self.schedule.reset()

    def __call__(self, x: Sequence[float], t: float) -> Sample:
        sigma = self.schedule.sigma
        e, alpha, u = tracking_control(self._configs[sigma - 1], x, t)
        new = switch_update(self.schedule, e, t)
        if new != sigma:
            e, alpha, u = tracking_control(self._configs[new - 1], x, t)
        cfg = self.base
        r1 = cfg.pfs[0](t)
        yd = cfg.reference(t)
        centre = yd + r1 * self._offset
        p1 = self.schedule.thresholds[-1][0]
        return Sample(u, list(x), e, e, alpha[:-1], new, r1, centre - p1, centre + p1, yd)

    def radii(self) -> list[float]:
        return list(self.schedule.thresholds[-1])

    def control(self, x: Sequence[float], t: float) -> float:
        """Input of the stage in force, without touching the schedule."""
        return tracking_control(self._configs[self.schedule.sigma - 1], x, t)[2]


@dataclass
class SimTrace:
    t: np.ndarray
    x: np.ndarray
    qx: np.ndarray
    e: np.ndarray
    eq: np.ndarray
    alpha: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    env_lo: np.ndarray
    env_hi: np.ndarray
    yd: np.ndarray
    events: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    failure: dict | None = None

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def allocate(cls, rows: int, n: int) -> "SimTrace":
        z = lambda *shape: np.zeros(shape)  # noqa: E731
        return cls(
            t=z(rows), x=z(rows, n), qx=z(rows, n), e=z(rows, n), eq=z(rows, n),
            alpha=z(rows, max(n - 1, 0)), u=z(rows), sigma=np.ones(rows, dtype=int), rho=z(rows),
            env_lo=z(rows), env_hi=z(rows), yd=z(rows),
        )

    def truncate(self, rows: int) -> None:
        for name in ("t", "x", "qx", "e", "eq", "alpha", "u", "sigma", "rho", "env_lo", "env_hi", "yd"):
            setattr(self, name, getattr(self, name)[:rows])


def _row(t: float, x: Sequence[float], s: Sample) -> tuple:
    return (t, *x, *s.qx, *s.e, *s.eq, *s.alpha, s.u, s.sigma, s.rho, s.env_lo, s.env_hi, s.yd)


def _fill(trace: SimTrace, buf: array, rows: int, n: int) -> None:
    """Unpack flat rows laid out as in :func:`_row` into the trace columns."""
    width = 1 + 4 * n + max(n - 1, 0) + 6
    data = np.frombuffer(buf, dtype=float, count=rows * width).reshape(rows, width)
    col = 1
    trace.t[:rows] = data[:, 0]
    for name, w in (("x", n), ("qx", n), ("e", n), ("eq", n), ("alpha", max(n - 1, 0))):
        getattr(trace, name)[:rows] = data[:, col : col + w]
        col += w
    trace.u[:rows] = data[:, col]
    trace.sigma[:rows] = data[:, col + 1].astype(int)
    for off, name in enumerate(("rho", "env_lo", "env_hi", "yd"), start=2):
        getattr(trace, name)[:rows] = data[:, col + off]


def simulate_closed_loop(
    plant: PlantModel,
    controller: Controller,
    h: float = DEFAULT_STEP,
    t_end: float = 10.0,
    x0: Sequence[float] | None = None,
    divergence_limit: float = DIVERGENCE_LIMIT,
    hold: bool = True,
) -> SimTrace:
    """Integrate the loop on the grid t_k = k*h, k = 0..round(t_end/h).

    At each grid time the controller sees the current state once; its output
    is held over the following RK4 step.  On divergence the trace is cut at
    the last good sample and ``trace.failure`` is set.

    ``hold=False`` re-evaluates the input inside every RK4 stage instead,
    which keeps the fourth-order accuracy of the integrator; it needs a
    controller with a pure ``control(x, t)`` method (smooth, unquantized
    laws only).  Switching and event logging still happen on the grid.
    """
    if not hold and not hasattr(controller, "control"):
        raise ValueError("continuous evaluation needs a smooth controller; quantized loops are sample-and-hold")
    if not h > 0 or not t_end > 0:
        raise ValueError("step and horizon must be positive")
    steps = int(round(t_end / h))
    n = plant.n
    trace = SimTrace.allocate(steps + 1, n)
    controller.reset()
    x = list(plant.x0 if x0 is None else x0)
    prev_q: list[float] | None = None
    prev_sigma = 1
    held = [0.0]
    if len(x) != n:
        raise ValueError(f"state has {len(x)} components, plant order is {n}")
    rhs = derivative_fn(plant)

    if hold:

        def deriv(state, tt):
            return rhs(state, held[0], tt)

    else:

        def deriv(state, tt):
            return rhs(state, controller.control(state, tt), tt)

    started = time.perf_counter()
    k = 0
    rows = 0
    buf = array("d")
    try:
        for k in range(steps + 1):
            t = k * h
            if any(abs(v) > divergence_limit for v in x):
                raise DivergenceError(f"state magnitude exceeded {divergence_limit:g}", t)
            s = controller(x, t)
            buf.extend(_row(t, x, s))
            rows = k + 1
            if controller.kind == "regulation":
                if prev_q is not None:
                    for i, (a, b) in enumerate(zip(prev_q, s.qx)):
                        if a != b:
                            trace.events.append({"t": t, "kind": "level", "channel": i + 1, "value": b})
                prev_q = list(s.qx)
            if s.sigma != prev_sigma:
                trace.events.append({"t": t, "kind": "switch", "sigma": s.sigma})
                prev_sigma = s.sigma
            if k == steps:
                break
            held[0] = s.u
            x = rk4_step(deriv, x, t, h)
    except (DivergenceError, OverflowError, ArithmeticError) as exc:
        when = getattr(exc, "time", None)
        trace.failure = {"kind": "divergence", "time": k * h if when is None else when, "message": str(exc)}
    _fill(trace, buf, rows, n)
    trace.truncate(rows)
    trace.meta.update(
        {
            "kind": controller.kind,
            "n": n,
            "step": h,
            "t_end": t_end,
            "radii": controller.radii() if hasattr(controller, "radii") else None,
            "hold": "sample-and-hold: control computed at each grid time and held over the step"
            if hold
            else "continuous: control re-evaluated at every integrator stage",
            "wall_time_s": time.perf_counter() - started,
        }
    )
    return trace


def simulate(
    scenario, step: float | None = None, t_end: float | None = None, force: bool = False, hold: bool = True
) -> SimTrace:
    """Simulate a loaded scenario; refuses infeasible gains unless ``force``."""
    from .errors import InfeasibleError

    report = scenario.feasibility()
    if not report.passed and not (force or scenario.force):
        raise InfeasibleError(f"scenario {scenario.name!r} has infeasible controller parameters", report)
    h = step if step is not None else scenario.step
    horizon = t_end if t_end is not None else scenario.t_end
    trace = simulate_closed_loop(scenario.plant, scenario.build_controller(), h, horizon, hold=hold)
    trace.meta["scenario"] = scenario.name
    trace.meta["feasible"] = report.passed
    return trace


def trace_stats(trace: SimTrace, radii: Sequence[float] | None = None) -> dict:
    """Per-channel summary: max |e_i|, first violation of radii, switch counts, max |u|."""
    if len(trace) == 0:
        raise BfppcError("empty trace")
    radii = list(radii) if radii is not None else trace.meta.get("radii")
    n = trace.n
    channels = []
    for i in range(n):
        col = np.abs(trace.e[:, i])
        first = None
        if radii is not None:
            bad = np.nonzero(col > radii[i])[0]
            if bad.size:
                first = float(trace.t[bad[0]])
        levels = int(np.count_nonzero(np.diff(trace.qx[:, i]))) if len(trace) > 1 else 0
        channels.append(
            {
                "channel": i + 1,
                "max_abs_e": float(col.max()),
                "max_abs_eq": float(np.abs(trace.eq[:, i]).max()),
                "radius": None if radii is None else float(radii[i]),
                "first_violation_time": first,
                "level_switches": levels,
            }
        )
    sigma_switches = int(np.count_nonzero(np.diff(trace.sigma))) if len(trace) > 1 else 0
    return {
        "samples": len(trace),
        "channels": channels,
        "sigma_switches": sigma_switches,
        "max_sigma": int(trace.sigma.max()),
        "max_abs_u": float(np.abs(trace.u).max()),
    }
