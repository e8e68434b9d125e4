"""Tracking controller for strict-feedback plants with a switched gain schedule.

Errors and laws (no derivative of any virtual control is ever evaluated)::

    e[1] = x1 - yd(t) - rho_1(t) * (x1(0) - yd(0))
    e[i] = x_i - alpha[i-1] - rho_i(t) * x_i(0)
    alpha[i] = -k[i] e[i] - M[i] tanh(M[i] e[i] / eps[i]) - c[i] e[i]**N[i]
    u = alpha[n]

The schedule index sigma starts at 1 and moves up one stage (capped at K) at
the first grid time some |e_i| exceeds the current stage threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .errors import BfppcError, DivergenceError
from .plant import PlantModel
from .signals import PerformanceFunction, ReferenceSignal


@dataclass(frozen=True)
class TrackingStage:
    k: tuple[float, ...]
    M: tuple[float, ...]
    c: tuple[float, ...]
    N: tuple[int, ...]

    def __post_init__(self) -> None:
        for Ni in self.N:
            if int(Ni) != Ni or Ni < 3 or Ni % 2 == 0:
                raise ValueError(f"N must be an odd integer >= 3, got {Ni}")
        for label in ("k", "M", "c"):
            if any(not v > 0 for v in getattr(self, label)):
                raise ValueError(f"tracking gains {label} must be positive")


def law(k: float, M: float, c: float, N: int, eps: float, e: float) -> float:
    return -k * e - M * math.tanh(M * e / eps) - c * e ** N


@dataclass
class TrackingControllerConfig:
    """Single-stage tracking controller plus its target radii and F* constants."""

    n: int
    k: tuple[float, ...]
    M: tuple[float, ...]
    c: tuple[float, ...]
    eps: tuple[float, ...]
    N: tuple[int, ...]
    p: tuple[float, ...]
    pfs: tuple[PerformanceFunction, ...]
    reference: ReferenceSignal
    x0: tuple[float, ...]
    F_star: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        for label in ("k", "M", "c", "eps", "N", "p", "pfs", "x0"):
            if len(getattr(self, label)) != self.n:
                raise ValueError(f"{label} must have {self.n} entries")
        TrackingStage(self.k, self.M, self.c, self.N)
        self.N = tuple(int(v) for v in self.N)

    @property
    def a0(self) -> float:
        return abs(self.x0[0] - self.reference(0.0))

    @property
    def stage(self) -> TrackingStage:
        return TrackingStage(self.k, self.M, self.c, self.N)

    def with_stage(self, stage: TrackingStage, p: Sequence[float] | None = None) -> "TrackingControllerConfig":
        return replace(
            self, k=stage.k, M=stage.M, c=stage.c, N=stage.N, p=tuple(p) if p is not None else self.p
        )


def tracking_control(
    cfg: TrackingControllerConfig, x: Sequence[float], t: float
) -> tuple[list[float], list[float], float]:
    """Errors, virtual controls and input (alpha[-1] is u)."""
    n = cfg.n
    if len(x) != n:
        raise ValueError(f"state has {len(x)} components, controller order is {n}")
    yd = cfg.reference(t)
    yd0 = cfg.reference(0.0)
    e, alpha = [], []
    prev = 0.0
    for i in range(n):
        r = cfg.pfs[i](t)
        if i == 0:
            ei = x[0] - yd - r * (cfg.x0[0] - yd0)
        else:
            ei = x[i] - prev - r * cfg.x0[i]
        Mi = cfg.M[i]
        ai = -cfg.k[i] * ei - Mi * math.tanh(Mi * ei / cfg.eps[i]) - cfg.c[i] * ei ** cfg.N[i]
        e.append(ei)
        alpha.append(ai)
        prev = ai
    if not math.isfinite(alpha[-1]):
        raise DivergenceError(f"non-finite control from state {list(x)!r}", t)
    return e, alpha, alpha[-1]


def tracking_residuals(k, M, c, N, eps, p, F_star) -> list[float]:
    return [
        k[i] * p[i] + M[i] + c[i] * p[i] ** N[i] - F_star[i] - 0.3 * eps[i] / p[i] for i in range(len(k))
    ]


@dataclass
class TrackingFeasibility:
    residuals: list[float]

    @property
    def passed(self) -> bool:
        return all(r >= 0 for r in self.residuals)

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "items": [
                {"name": f"channel {i + 1} gain condition", "residual": r, "satisfied": r >= 0}
                for i, r in enumerate(self.residuals)
            ],
        }


def check_tracking_feasibility(cfg: TrackingControllerConfig) -> TrackingFeasibility:
    if len(cfg.F_star) != cfg.n:
        raise BfppcError("F_star must be set before checking tracking feasibility")
    return TrackingFeasibility(tracking_residuals(cfg.k, cfg.M, cfg.c, cfg.N, cfg.eps, cfg.p, cfg.F_star))


# --- switching schedule -----------------------------------------------------


@dataclass
class SwitchSchedule:
    """Staged gains with increasing thresholds; ``sigma`` is 1-based."""

    thresholds: tuple[tuple[float, ...], ...]
    stages: tuple[TrackingStage, ...]
    sigma: int = 1
    history: list[tuple[float, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.thresholds) != len(self.stages) or not self.stages:
            raise ValueError("need one threshold row per stage and at least one stage")
        n = len(self.thresholds[0])
        for m in range(1, self.K):
            for i in range(n):
                if not self.thresholds[m][i] > self.thresholds[m - 1][i]:
                    raise ValueError(f"thresholds of channel {i + 1} must increase with the stage index")
        if not 1 <= self.sigma <= self.K:
            raise ValueError(f"sigma must lie in [1, {self.K}]")

    @property
    def K(self) -> int:
        return len(self.stages)

    @property
    def current(self) -> TrackingStage:
        return self.stages[self.sigma - 1]

    @property
    def current_thresholds(self) -> tuple[float, ...]:
        return self.thresholds[self.sigma - 1]

    def reset(self) -> None:
        self.sigma = 1
        self.history.clear()


def switch_update(sched: SwitchSchedule, e: Sequence[float], t: float | None = None) -> int:
    """Advance sigma by one (capped at K) if any |e_i| leaves the current thresholds."""
    thr = sched.current_thresholds
    if all(abs(ei) <= pi for ei, pi in zip(e, thr)):
        return sched.sigma
    if sched.sigma < sched.K:
        sched.sigma += 1
        if t is not None:
            sched.history.append((t, sched.sigma))
    return sched.sigma


# --- worst-case constants F_i* ------------------------------------------------

# F0(args, upstream) with args laid out as in f0_arg_names
BoundFn = Callable[[Sequence[float], Sequence["UpstreamGains"]], float]


@dataclass(frozen=True)
class UpstreamGains:
    k: float
    M: float
    c: float
    N: int
    eps: float


def f0_arg_names(i: int, n: int) -> list[str]:
    """``rho1..rhoi, rhodot1..rhodoti, e1..e{i+1}, yd, ydot, a0, x02..x0{i+1}`` (last stage stops at n)."""
    m = min(i + 1, n)
    return (
        [f"rho{j}" for j in range(1, i + 1)]
        + [f"rhodot{j}" for j in range(1, i + 1)]
        + [f"e{j}" for j in range(1, m + 1)]
        + ["yd", "ydot", "a0"]
        + [f"x0{j}" for j in range(2, m + 1)]
    )


def _amag(g: UpstreamGains, e: float) -> float:
    return g.k * e + g.M * math.tanh(g.M * e / g.eps) + g.c * e ** g.N


def _aslope(g: UpstreamGains, e: float) -> float:
    # sech^2 <= 1 keeps this nondecreasing in e
    return g.k + g.M * g.M / g.eps + g.c * g.N * e ** (g.N - 1)


def tracking_f0_from_majorants(plant: PlantModel) -> list[BoundFn]:
    """Stage bounds F_i^0 from the plant majorants.

    Stage i bounds ``(|f_i| + |g_i|(|e_{i+1}| + |x_{i+1}(0)|) + |dalpha_{i-1}/dt|
    + |drho_i/dt x_i(0)|) / g_m``; for stage 1 the last two terms become
    ``|dyd/dt| + |drho_1/dt| a0``.  ``|dalpha_j/dt|`` is bounded by
    ``|dalpha_j/de_j| * |de_j/dt|`` using the stage-j gains in ``upstream``.
    """
    n = plant.n

    def make(i: int) -> BoundFn:
        def f0(args: Sequence[float], upstream: Sequence[UpstreamGains]) -> float:
            return _f0(plant, i, args, upstream)

        f0.__name__ = f"F{i}_0"
        return f0

    return [make(i) for i in range(1, n + 1)]


def _f0(plant: PlantModel, i: int, args: Sequence[float], upstream: Sequence[UpstreamGains]) -> float:
    n = plant.n
    m = min(i + 1, n)
    rho = list(args[0:i])
    rd = list(args[i : 2 * i])
    e = list(args[2 * i : 2 * i + m]) + [0.0] * (n + 1 - m)
    yd, ydot, a0 = args[2 * i + m : 2 * i + m + 3]
    x0 = [0.0] + list(args[2 * i + m + 3 :]) + [0.0] * (n + 1 - m)
    # rho_{j} for j > i is only ever bounded by rho(0) = 1
    rho_full = rho + [1.0] * (n + 1 - i)
    if len(upstream) < i - 1:
        raise BfppcError(f"stage {i} bound needs gains of stages 1..{i - 1}")

    xb = [0.0] * n
    xb[0] = e[0] + yd + rho_full[0] * a0
    for j in range(1, i):
        xb[j] = e[j] + _amag(upstream[j - 1], e[j - 1]) + rho_full[j] * x0[j]

    def own_terms(j: int, adot: float) -> float:
        if j == 0:
            return ydot + rd[0] * a0
        return adot + rd[j] * x0[j]

    adot = 0.0
    for j in range(i - 1):
        g = upstream[j]
        edot = (
            plant.f_star[j](xb)
            + plant.g_star[j](xb) * (e[j + 1] + rho_full[j + 1] * x0[j + 1] + _amag(g, e[j]))
            + own_terms(j, adot)
        )
        adot = _aslope(g, e[j]) * edot

    k = i - 1
    coupling = e[k + 1] + x0[k + 1] if k < n - 1 else 0.0
    total = plant.f_star[k](xb) + plant.g_star[k](xb) * coupling + own_terms(k, adot)
    return total / plant.g_m


def f_star_args(
    i: int,
    n: int,
    pfs: Sequence[PerformanceFunction],
    reference: ReferenceSignal,
    p: Sequence[float],
    x0: Sequence[float],
    rho_dot_bound: float | None = None,
) -> list[float]:
    """Worst-case argument list for stage i on the invariant box."""
    m = min(i + 1, n)
    rho_max = [pf.rho_max for pf in pfs[:i]]
    rd = [rho_dot_bound if rho_dot_bound is not None else max(pf.rho_dot_max for pf in pfs)] * i
    a0 = abs(x0[0] - reference(0.0))
    return rho_max + rd + list(p[:m]) + [reference.Y0, reference.Y1, a0] + [abs(v) for v in x0[1:m]]


def f_star_from_bounds(
    plant: PlantModel,
    pfs: Sequence[PerformanceFunction],
    reference: ReferenceSignal,
    p: Sequence[float],
    F0_evals: Sequence[BoundFn] | None,
    upstream: Sequence[UpstreamGains] = (),
    rho_dot_bound: float | None = None,
) -> list[float]:
    """F_i* = F_i^0 at the worst-case arguments, for every stage.

    ``upstream`` must hold the gains of stages 1..n-1 (only the first i-1 are
    read by stage i).  ``rho_dot_bound`` overrides the common bound on
    |d rho_i/dt|; by default the largest over channels is used.
    """
    if F0_evals is None:
        raise BfppcError("no F_i^0 evaluators supplied")
    n = plant.n
    out = []
    for i in range(1, n + 1):
        val = F0_evals[i - 1](f_star_args(i, n, pfs, reference, p, plant.x0, rho_dot_bound), upstream[: i - 1])
        if not math.isfinite(val) or val < 0:
            raise BfppcError(f"F*[{i}] = {val} is not a nonnegative finite bound")
        out.append(val)
    return out


def synthesize_tracking_stage(
    plant: PlantModel,
    pfs: Sequence[PerformanceFunction],
    reference: ReferenceSignal,
    p: Sequence[float],
    F0_evals: Sequence[BoundFn],
    k: Sequence[float],
    M: Sequence[float],
    N: Sequence[int],
    eps: Sequence[float],
    c_min: float = 1e-3,
    margin: float = 1.05,
    rho_dot_bound: float | None = None,
) -> tuple[TrackingStage, list[float]]:
    """Solve the gain condition of each channel for c, keeping k and M.

    Channels are handled in order because F_i* depends on the gains of the
    channels below it.  Returns the stage and the F* vector.
    """
    n = plant.n
    upstream: list[UpstreamGains] = []
    cs, F = [], []
    for i in range(1, n + 1):
        j = i - 1
        val = F0_evals[j](f_star_args(i, n, pfs, reference, p, plant.x0, rho_dot_bound), upstream)
        if not math.isfinite(val) or val < 0:
            raise BfppcError(f"F*[{i}] = {val} is not a nonnegative finite bound")
        need = val + 0.3 * eps[j] / p[j] - k[j] * p[j] - M[j]
        cj = max(c_min, margin * need / p[j] ** N[j]) if need > 0 else c_min
        cs.append(cj)
        F.append(val)
        upstream.append(UpstreamGains(k[j], M[j], cj, int(N[j]), eps[j]))
    return TrackingStage(tuple(k), tuple(M), tuple(cs), tuple(int(v) for v in N)), F


def upstream_of(stage: TrackingStage, eps: Sequence[float]) -> list[UpstreamGains]:
    return [UpstreamGains(stage.k[i], stage.M[i], stage.c[i], stage.N[i], eps[i]) for i in range(len(stage.k))]
