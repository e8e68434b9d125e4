"""Performance functions rho(t) and reference trajectories y_d(t)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np


class Family(str, Enum):
    COSINE_TAPER = "cosine_taper"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class PerformanceFunction:
    """Nonincreasing envelope shape with rho(0) = 1.

    cosine_taper: 0.5*(1 + cos(t/ts)) until t = pi*ts, then 0.
    exponential:  (1 - rho1)*exp(-rho0*t) + rho1.
    """

    family: Family = Family.COSINE_TAPER
    ts: float = 1.0
    rho0: float = 1.0
    rho1: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.COSINE_TAPER:
            if not self.ts > 0:
                raise ValueError(f"ts must be positive, got {self.ts}")
        else:
            if not self.rho0 > 0:
                raise ValueError(f"rho0 must be positive, got {self.rho0}")
            if not 0 < self.rho1 < 1:
                raise ValueError(f"rho1 must lie in (0, 1), got {self.rho1}")

    @classmethod
    def cosine(cls, ts: float = 1.0) -> "PerformanceFunction":
        return cls(Family.COSINE_TAPER, ts=ts)

    @classmethod
    def exponential(cls, rho0: float, rho1: float) -> "PerformanceFunction":
        return cls(Family.EXPONENTIAL, rho0=rho0, rho1=rho1)

    @property
    def rho_max(self) -> float:
        return 1.0

    @property
    def rho_dot_max(self) -> float:
        if self.family is Family.COSINE_TAPER:
            return 1.0 / (2.0 * self.ts)
        return self.rho0 * (1.0 - self.rho1)

    def __call__(self, t: float) -> float:
        return rho(self, t)

    def to_dict(self) -> dict:
        if self.family is Family.COSINE_TAPER:
            return {"family": self.family.value, "ts": self.ts}
        return {"family": self.family.value, "rho0": self.rho0, "rho1": self.rho1}


def _check_time(t: float) -> None:
    if not t >= 0:
        raise ValueError(f"performance functions are defined for t >= 0, got {t}")


def rho(pf: PerformanceFunction, t: float) -> float:
    _check_time(t)
    if pf.family is Family.COSINE_TAPER:
        if t < math.pi * pf.ts:
            return 0.5 * (1.0 + math.cos(t / pf.ts))
        return 0.0
    return (1.0 - pf.rho1) * math.exp(-pf.rho0 * t) + pf.rho1


def rho_dot(pf: PerformanceFunction, t: float) -> float:
    _check_time(t)
    if pf.family is Family.COSINE_TAPER:
        if t < math.pi * pf.ts:
            return -math.sin(t / pf.ts) / (2.0 * pf.ts)
        return 0.0
    return -pf.rho0 * (1.0 - pf.rho1) * math.exp(-pf.rho0 * t)


def bounds(pf: PerformanceFunction) -> tuple[float, float]:
    """(sup rho, sup |d rho/dt|) over t >= 0."""
    return pf.rho_max, pf.rho_dot_max


@dataclass(frozen=True)
class ReferenceSignal:
    """Desired output y_d(t) with known bounds |y_d| <= Y0, |dy_d/dt| <= Y1."""

    value: Callable[[float], float]
    derivative: Callable[[float], float]
    Y0: float
    Y1: float
    kind: str = "custom"
    spec: dict | None = None

    def __call__(self, t: float) -> float:
        return self.value(t)


def constant_reference(c: float = 0.0) -> ReferenceSignal:
    return ReferenceSignal(
        lambda t: c, lambda t: 0.0, abs(c), 0.0, "constant", {"kind": "constant", "value": c}
    )


def sinusoid_reference(amplitude: float = 1.0, omega: float = 1.0) -> ReferenceSignal:
    a, w = amplitude, omega
    return ReferenceSignal(
        lambda t: a * math.sin(w * t),
        lambda t: a * w * math.cos(w * t),
        abs(a),
        abs(a * w),
        "sinusoid",
        {"kind": "sinusoid", "amplitude": a, "omega": w},
    )


def expression_reference(
    text: str, horizon: float, derivative_text: str | None = None, samples: int = 20001
) -> ReferenceSignal:
    """Reference from a DSL expression in ``t``.

    Y0 and Y1 are grid maxima over ``[0, horizon]`` inflated by 5 %.  Without
    ``derivative_text`` the derivative is a central difference.
    """
    from .expr import parse_expression

    f = parse_expression(text).compile(("t",))
    if derivative_text is not None:
        df = parse_expression(derivative_text).compile(("t",))
    else:
        step = 1e-6

        def df(t: float) -> float:
            lo = max(t - step, 0.0)
            return (f(t + step) - f(lo)) / (t + step - lo)

    grid = np.linspace(0.0, horizon, samples)
    y0 = max(abs(f(t)) for t in grid)
    y1 = max(abs(df(t)) for t in grid)
    spec = {"kind": "expr", "expr": text}
    if derivative_text is not None:
        spec["dexpr"] = derivative_text
    return ReferenceSignal(f, df, 1.05 * y0, 1.05 * y1, "expr", spec)


def reference_from_config(cfg: dict | None, horizon: float) -> ReferenceSignal:
    if not cfg:
        return constant_reference(0.0)
    kind = cfg.get("kind", "constant")
    if kind == "constant":
        return constant_reference(float(cfg.get("value", 0.0)))
    if kind == "sinusoid":
        return sinusoid_reference(float(cfg.get("amplitude", 1.0)), float(cfg.get("omega", 1.0)))
    if kind == "expr":
        return expression_reference(cfg["expr"], horizon, cfg.get("dexpr"))
    raise ValueError(f"unknown reference kind {kind!r}")


def performance_from_config(cfg: dict | None) -> PerformanceFunction:
    cfg = cfg or {}
    family = cfg.get("family", "cosine_taper")
    if family == Family.COSINE_TAPER.value:
        return PerformanceFunction.cosine(float(cfg.get("ts", 1.0)))
    if family == Family.EXPONENTIAL.value:
        return PerformanceFunction.exponential(float(cfg["rho0"]), float(cfg["rho1"]))
    raise ValueError(f"unknown performance family {family!r}")


def performance_channels(cfg: dict | None, n: int) -> list[PerformanceFunction]:
    """Per-channel performance functions.

    ``cfg`` is either one family description applied to every channel, or a
    mapping with a ``default`` entry and an optional ``channels`` list whose
    non-null items override the default.
    """
    cfg = cfg or {}
    if "channels" not in cfg:
        pf = performance_from_config(cfg.get("default", cfg))
        return [pf] * n
    default = cfg.get("default", {})
    chans = cfg["channels"]
    if len(chans) != n:
        raise ValueError(f"performance.channels has {len(chans)} entries, plant order is {n}")
    return [performance_from_config(c if c is not None else default) for c in chans]
