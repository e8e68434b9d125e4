"""Quantized-state regulation controller.

The controller only sees quantized states.  With ``rho`` the performance
function and ``qx0`` the quantized initial state, stage i uses::

    e_q[1] = q(x1) - rho(t) * qx0[1]
    e_q[i] = q(xi) - alpha_q[i-1] - rho(t) * qx0[i]
    alpha_q[i] = -gamma[i] * H[i] * e_q[i] - c[i] * e_q[i]**N[i]
    u = alpha_q[n]

``H[i]`` is the stage bound frozen at its worst case over the invariant box,
so the envelope radii ``p`` and mismatch radii ``delta`` are constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import DivergenceError, SynthesisError
from .plant import PlantModel
from .quantizer import QuantizerModel
from .signals import PerformanceFunction, rho as rho_of


@dataclass(frozen=True)
class RegulationStage:
    gamma: float
    H: float
    c: float
    N: int


# h0(args, upstream) with args laid out as in h0_arg_names
BoundFn = Callable[[Sequence[float], Sequence[RegulationStage]], float]


def h0_arg_names(i: int, n: int) -> list[str]:
    """Positional argument names of the stage-i bound (1-based i).

    ``rho, rhodot, e1..ei, q1..q{i+1}, d0``; the last stage stops at ``qn``.
    Entries are magnitudes.
    """
    m = min(i + 1, n)
    return ["rho", "rhodot"] + [f"e{j}" for j in range(1, i + 1)] + [f"q{j}" for j in range(1, m + 1)] + ["d0"]


def regulation_h0_from_majorants(plant: PlantModel, init_offset: float = 1.0, floor: float = 0.0) -> list[BoundFn]:
    """Stage bounds built from the plant's majorants.

    Stage i bounds ``|f_i - rhodot*x_i(0) - dalpha_{i-1}/dt + rho*x_{i+1}(0)|``
    on the box ``|e_j| <= e_j``.  Initial states are bounded by
    ``|q_j| + init_offset*d0``; ``init_offset = 1`` is tight, 2 reproduces the
    printed offsets of example 1.  ``floor`` is added to keep the bound
    positive at the origin.
    """
    n = plant.n

    def make(i: int) -> BoundFn:
        def h0(args: Sequence[float], upstream: Sequence[RegulationStage]) -> float:
            return _stage_bound(plant, i, args, upstream, init_offset) + floor

        h0.__name__ = f"H{i}_0"
        return h0

    return [make(i) for i in range(1, n + 1)]


def _alpha_mag(st: RegulationStage, e: float) -> float:
    return st.gamma * st.H * e + st.c * e ** st.N


def _alpha_slope(st: RegulationStage, e: float) -> float:
    return st.gamma * st.H + st.c * st.N * e ** (st.N - 1)


def _stage_bound(plant: PlantModel, i: int, args: Sequence[float], upstream: Sequence[RegulationStage], off: float) -> float:
    n = plant.n
    m = min(i + 1, n)
    rho, rd = args[0], args[1]
    e = list(args[2 : 2 + i])
    q = list(args[2 + i : 2 + i + m])
    d0 = args[2 + i + m]
    x0b = [qj + off * d0 for qj in q] + [0.0]
    if len(upstream) < i - 1:
        raise SynthesisError(f"stage {i} bound needs gains of stages 1..{i - 1}")

    xb = [0.0] * n
    xb[0] = e[0] + rho * x0b[0]
    for j in range(1, i):
        xb[j] = e[j] + _alpha_mag(upstream[j - 1], e[j - 1]) + rho * x0b[j]

    # bound on |d alpha_j / dt| for the stages below i
    adot = 0.0
    for j in range(i - 1):
        st = upstream[j]
        hb = plant.f_star[j](xb) + rd * x0b[j] + adot + rho * x0b[j + 1]
        edot = hb + e[j + 1] + _alpha_mag(st, e[j])
        adot = _alpha_slope(st, e[j]) * edot

    k = i - 1
    out = plant.f_star[k](xb) + rd * x0b[k] + adot
    if k < n - 1:
        out += rho * x0b[k + 1]
    return out


@dataclass
class RegulationControllerConfig:
    n: int
    gamma: tuple[float, ...]
    c: tuple[float, ...]
    N: tuple[int, ...]
    H: tuple[float, ...]
    c0: float
    eps: tuple[float, ...]
    delta_M: float
    q_x0: tuple[float, ...]
    pf: PerformanceFunction
    delta0: float
    H_star: tuple[float, ...] = ()
    H0: tuple[BoundFn, ...] | None = field(default=None, repr=False, compare=False)
    p: tuple[float, ...] = field(init=False)
    delta: tuple[float, ...] = field(init=False)

    def __post_init__(self) -> None:
        for label in ("gamma", "c", "N", "H", "eps", "q_x0"):
            if len(getattr(self, label)) != self.n:
                raise ValueError(f"{label} must have {self.n} entries")
        for Ni in self.N:
            if int(Ni) != Ni or Ni < 3 or Ni % 2 == 0:
                raise ValueError(f"N must be an odd integer >= 3, got {Ni}")
        self.N = tuple(int(v) for v in self.N)
        p, delta = envelope_radii(self.gamma, self.H, self.eps, self.delta_M, self.c0)
        self.p = tuple(p)
        self.delta = tuple(delta)
        if not self.H_star:
            self.H_star = tuple(self.H)

    @property
    def stages(self) -> list[RegulationStage]:
        return [RegulationStage(g, h, c, n) for g, h, c, n in zip(self.gamma, self.H, self.c, self.N)]

    def to_dict(self) -> dict:
        return {
            "kind": "regulation",
            "gamma": list(self.gamma),
            "c": list(self.c),
            "N": list(self.N),
            "H": list(self.H),
            "H_star": list(self.H_star),
            "c0": self.c0,
            "eps": list(self.eps),
            "delta_M": self.delta_M,
            "delta0": self.delta0,
            "q_x0": list(self.q_x0),
            "p": list(self.p),
            "delta": list(self.delta),
            "performance": self.pf.to_dict(),
        }


def envelope_radii(gamma, H, eps, delta_M, c0) -> tuple[list[float], list[float]]:
    """Invariant-box radii p and control-mismatch radii delta."""
    p, delta = [], []
    prev = 0.0
    for i, (g, h, ep) in enumerate(zip(gamma, H, eps)):
        p.append(delta_M + ep if i == 0 else prev + delta_M + ep)
        prev = g * h * (delta_M + prev) + c0
        delta.append(prev)
    return p, delta


def time_varying_radii(cfg: "RegulationControllerConfig", t: float) -> list[float]:
    """Radii p(t) with the pointwise quantization bound (1 + rho(t))*delta0 in place of delta_M.

    Informational only: the guarantee is stated for the constant radii.
    """
    dm = (1.0 + rho_of(cfg.pf, t)) * cfg.delta0
    return envelope_radii(cfg.gamma, cfg.H, cfg.eps, dm, cfg.c0)[0]


def _stage_law(gamma: float, H: float, c: float, N: int, e: float) -> float:
    return -gamma * H * e - c * e ** N


def regulation_control(
    cfg: RegulationControllerConfig, q_x: Sequence[float], t: float
) -> tuple[list[float], list[float], float]:
    """Quantized errors, virtual controls and input at time t."""
    return _cascade(cfg, q_x, cfg.q_x0, rho_of(cfg.pf, t))


def regulation_errors(
    cfg: RegulationControllerConfig, x: Sequence[float], x0: Sequence[float], t: float
) -> tuple[list[float], list[float]]:
    """True (unquantized) errors and virtual controls, for diagnostics only."""
    e, alpha, _ = _cascade(cfg, x, x0, rho_of(cfg.pf, t))
    return e, alpha


def _cascade(cfg, x, x0, r):
    if len(x) != cfg.n:
        raise ValueError(f"state has {len(x)} components, controller order is {cfg.n}")
    e, alpha = [], []
    prev = 0.0
    for i in range(cfg.n):
        ei = x[i] - prev - r * x0[i]
        ai = _stage_law(cfg.gamma[i], cfg.H[i], cfg.c[i], cfg.N[i], ei)
        e.append(ei)
        alpha.append(ai)
        prev = ai
    u = alpha[-1]
    if not math.isfinite(u):
        raise DivergenceError(f"non-finite control from state {list(x)!r}")
    return e, alpha, u


def c_upper_bounds(N, p, delta, delta_M, c0) -> list[float]:
    out = []
    for i in range(len(N)):
        shift = delta_M if i == 0 else delta_M + delta[i - 1]
        out.append(c0 / (N[i] * shift * (p[i] ** (N[i] - 1) + (p[i] + shift) ** (N[i] - 1))))
    return out


def gamma_lower_bounds(H_star, c, N, p, eps, delta_M, c0) -> list[float]:
    n = len(H_star)
    out = []
    for i in range(n):
        num = H_star[i] + c0 - c[i] * p[i] ** N[i]
        if i < n - 1:
            num += eps[i + 1] + delta_M
        out.append(num / (eps[i] * H_star[i]))
    return out


@dataclass
class FeasibilityItem:
    name: str
    residual: float
    strict: bool

    @property
    def satisfied(self) -> bool:
        return self.residual > 0 if self.strict else self.residual >= 0


@dataclass
class FeasibilityReport:
    items: list[FeasibilityItem]

    @property
    def passed(self) -> bool:
        return all(it.satisfied for it in self.items)

    def failures(self) -> list[FeasibilityItem]:
        return [it for it in self.items if not it.satisfied]

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "items": [
                {"name": it.name, "residual": it.residual, "strict": it.strict, "satisfied": it.satisfied}
                for it in self.items
            ],
        }


def check_regulation_feasibility(cfg: RegulationControllerConfig) -> FeasibilityReport:
    """Residuals of the gain conditions.

    Line 1/2: ``c_i`` below its mismatch bound (residual ``bound - c_i >= 0``).
    Line 3/4: ``gamma_i`` above its lower bound (residual ``gamma_i - bound > 0``).
    """
    n = cfg.n
    items = []
    for i in range(n):
        items.append(FeasibilityItem(f"c[{i + 1}] > 0", cfg.c[i], True))
    ub = c_upper_bounds(cfg.N, cfg.p, cfg.delta, cfg.delta_M, cfg.c0)
    for i in range(n):
        line = 1 if i == 0 else 2
        items.append(FeasibilityItem(f"line {line}: c[{i + 1}] upper bound", ub[i] - cfg.c[i], False))
    if any(h <= 0 for h in cfg.H_star):
        items.append(FeasibilityItem("H_star > 0", min(cfg.H_star), True))
        return FeasibilityReport(items)
    lb = gamma_lower_bounds(cfg.H_star, cfg.c, cfg.N, cfg.p, cfg.eps, cfg.delta_M, cfg.c0)
    for i in range(n):
        line = 3 if i < n - 1 else 4
        items.append(FeasibilityItem(f"line {line}: gamma[{i + 1}] lower bound", cfg.gamma[i] - lb[i], True))
        items.append(FeasibilityItem(f"gamma[{i + 1}] > 0", cfg.gamma[i], True))
    return FeasibilityReport(items)


def worst_case_args(i: int, n: int, rho_max: float, rho_dot_max: float, p, q_x0, delta0) -> list[float]:
    m = min(i + 1, n)
    return [rho_max, rho_dot_max, *p[:i], *(abs(v) for v in q_x0[:m]), delta0]


def synthesize_regulation(
    plant: PlantModel,
    quantizer: QuantizerModel,
    pf: PerformanceFunction,
    H0_evals: Sequence[BoundFn],
    eps: Sequence[float],
    c0: float,
    N: Sequence[int],
    q_x0: Sequence[float] | None = None,
    gamma_margin: float = 1.05,
) -> RegulationControllerConfig:
    """Pick c at its upper bound and gamma at ``gamma_margin`` times its lower bound.

    Runs the forward recursion p[1] -> H[1] -> gamma[1], delta[1] -> p[2] -> ...
    with every H[i] evaluated at the worst case of the invariant box.
    """
    n = plant.n
    if len(H0_evals) != n or len(eps) != n or len(N) != n:
        raise SynthesisError(f"need {n} bound evaluators, eps values and powers")
    if not c0 > 0 or any(not v > 0 for v in eps):
        raise SynthesisError("c0 and eps must be positive")
    if q_x0 is None:
        q_x0 = [quantizer.level(v) for v in plant.x0]
    rho_max, rho_dot_max = pf.rho_max, pf.rho_dot_max
    delta0 = quantizer.delta0
    delta_M = (1.0 + rho_max) * delta0

    stages: list[RegulationStage] = []
    gammas, cs, Hs, H_stars, p, delta = [], [], [], [], [], []
    prev_delta = 0.0
    for i in range(1, n + 1):
        k = i - 1
        pi = delta_M + eps[k] if i == 1 else prev_delta + delta_M + eps[k]
        p.append(pi)
        Hi = H0_evals[k](worst_case_args(i, n, rho_max, rho_dot_max, p, q_x0, delta0), stages)
        Hs_i = H0_evals[k]([0.0] * len(h0_arg_names(i, n)), stages)
        if not (math.isfinite(Hi) and math.isfinite(Hs_i)):
            raise DivergenceError(f"stage {i} bound is not finite (H={Hi}, H*={Hs_i})")
        if Hs_i <= 0:
            raise SynthesisError(f"H*[{i}] = {Hs_i} must be positive; enlarge the stage-{i} bound")
        Hi = max(Hi, Hs_i)
        shift = delta_M + prev_delta
        ci = c0 / (N[k] * shift * (pi ** (N[k] - 1) + (pi + shift) ** (N[k] - 1)))
        num = Hs_i + c0 - ci * pi ** N[k] + (eps[k + 1] + delta_M if i < n else 0.0)
        lb = num / (eps[k] * Hs_i)
        gi = gamma_margin * lb if lb > 0 else 1.0 / eps[k]
        prev_delta = gi * Hi * shift + c0
        if not math.isfinite(prev_delta):
            raise DivergenceError(f"mismatch radius of stage {i} is not finite")
        stages.append(RegulationStage(gi, Hi, ci, int(N[k])))
        gammas.append(gi)
        cs.append(ci)
        Hs.append(Hi)
        H_stars.append(Hs_i)
        delta.append(prev_delta)

    cfg = RegulationControllerConfig(
        n=n,
        gamma=tuple(gammas),
        c=tuple(cs),
        N=tuple(int(v) for v in N),
        H=tuple(Hs),
        c0=c0,
        eps=tuple(eps),
        delta_M=delta_M,
        q_x0=tuple(q_x0),
        pf=pf,
        delta0=delta0,
        H_star=tuple(H_stars),
        H0=tuple(H0_evals),
    )
    report = check_regulation_feasibility(cfg)
    if not report.passed:
        bad = ", ".join(f"{it.name} ({it.residual:.3g})" for it in report.failures())
        raise SynthesisError(f"synthesized gains fail feasibility: {bad}")
    return cfg


def output_envelope(cfg: RegulationControllerConfig, x1_0: float, t: float) -> tuple[float, float]:
    """Guaranteed band for x1(t): rho(t)*x1(0) -/+ (delta_M + eps[1])."""
    centre = rho_of(cfg.pf, t) * x1_0
    half = cfg.delta_M + cfg.eps[0]
    return centre - half, centre + half


def regulation_config_from_constants(
    n: int,
    gamma,
    c,
    N,
    H,
    eps,
    c0: float,
    quantizer: QuantizerModel,
    pf: PerformanceFunction,
    x0: Sequence[float],
    H0_evals: Sequence[BoundFn] | None = None,
) -> RegulationControllerConfig:
    """Config from user-chosen gains; H* comes from the bounds when supplied."""
    q_x0 = tuple(quantizer.level(v) for v in x0)
    delta_M = (1.0 + pf.rho_max) * quantizer.delta0
    H_star: tuple[float, ...] = ()
    if H0_evals is not None:
        stages = [RegulationStage(g, h, cc, int(nn)) for g, h, cc, nn in zip(gamma, H, c, N)]
        H_star = tuple(
            H0_evals[i]([0.0] * len(h0_arg_names(i + 1, n)), stages[:i]) for i in range(n)
        )
    return RegulationControllerConfig(
        n=n,
        gamma=tuple(float(v) for v in gamma),
        c=tuple(float(v) for v in c),
        N=tuple(int(v) for v in N),
        H=tuple(float(v) for v in H),
        c0=c0,
        eps=tuple(float(v) for v in eps),
        delta_M=delta_M,
        q_x0=q_x0,
        pf=pf,
        delta0=quantizer.delta0,
        H_star=H_star,
        H0=tuple(H0_evals) if H0_evals is not None else None,
    )
