"""Strict-feedback plant models and the two bundled example systems.

A plant of order n evolves as::

    dx_i/dt = f_i(x_1..x_i) + g_i(x_1..x_i) * x_{i+1},   i < n
    dx_n/dt = f_n(x_1..x_n) + g_n(x_1..x_n) * u

Majorants ``f_star[i]`` and ``g_star[i]`` are evaluated on the vector of state
magnitudes ``|x|`` and must be nondecreasing in every entry; they satisfy
``|f_i(x)| <= f_star_i(|x|)`` and ``g_m <= g_i(x) <= g_star_i(|x|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, ScenarioError
from .expr import parse_expression

StateFn = Callable[[Sequence[float], float], float]
MajorantFn = Callable[[Sequence[float]], float]


def _one(x: Sequence[float], t: float = 0.0) -> float:
    return 1.0


def _const(c: float) -> Callable[..., float]:
    def fn(*_args) -> float:
        return c

    return fn


@dataclass(frozen=True)
class PlantModel:
    n: int
    f: tuple[StateFn, ...]
    g: tuple[StateFn, ...]
    f_star: tuple[MajorantFn, ...]
    g_star: tuple[MajorantFn, ...]
    g_m: float
    x0: tuple[float, ...]
    name: str = "plant"
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("plant order must be >= 1")
        for label in ("f", "g", "f_star", "g_star", "x0"):
            if len(getattr(self, label)) != self.n:
                raise ValueError(f"plant.{label} must have {self.n} entries")
        if not self.g_m > 0:
            raise ValueError(f"g_m must be positive, got {self.g_m}")

    def f_star_at(self, i: int, x: Sequence[float]) -> float:
        """Majorant of |f_i| evaluated at the magnitudes of ``x`` (0-based i)."""
        return self.f_star[i](_magnitudes(x, self.n))

    def g_star_at(self, i: int, x: Sequence[float]) -> float:
        return self.g_star[i](_magnitudes(x, self.n))


def _magnitudes(x: Sequence[float], n: int) -> list[float]:
    mags = [abs(v) for v in x[:n]]
    if len(mags) < n:
        mags.extend([0.0] * (n - len(mags)))
    return mags


def eval_derivative(plant: PlantModel, x: Sequence[float], u: float, t: float = 0.0) -> list[float]:
    n = plant.n
    if len(x) != n:
        raise ValueError(f"state has {len(x)} components, plant order is {n}")
    # a single sum catches inf and nan in any component
    if not math.isfinite(sum(x)):
        raise DivergenceError(f"non-finite state {list(x)!r}", t)
    f, g = plant.f, plant.g
    out = [f[i](x, t) + g[i](x, t) * x[i + 1] for i in range(n - 1)]
    out.append(f[n - 1](x, t) + g[n - 1](x, t) * u)
    return out


def derivative_fn(plant: PlantModel) -> Callable[[Sequence[float], float, float], list[float]]:
    """Unchecked ``(x, u, t) -> x'`` for the integrator loop.

    Same arithmetic as :func:`eval_derivative` without the per-call shape and
    finiteness checks; non-finite values propagate and are caught once per step.
    """
    n = plant.n
    pairs = list(zip(plant.f[: n - 1], plant.g[: n - 1], range(1, n)))
    fn, gn = plant.f[n - 1], plant.g[n - 1]

    def deriv(x, u, t):
        out = [f(x, t) + g(x, t) * x[j] for f, g, j in pairs]
        out.append(fn(x, t) + gn(x, t) * u)
        return out

    return deriv


def sample_majorant_soundness(
    plant: PlantModel, box: float | Sequence[float] = 5.0, samples: int = 10_000, seed: int = 0
) -> dict:
    """Spot-check |f_i| <= f_i* and g_m <= g_i <= g_i* on uniform samples of a box.

    Returns the worst slack per check (negative means violated).
    """
    rng = np.random.default_rng(seed)
    half = np.broadcast_to(np.asarray(box, dtype=float), (plant.n,))
    pts = rng.uniform(-half, half, size=(samples, plant.n))
    worst = {"f": math.inf, "g_lower": math.inf, "g_upper": math.inf}
    where: dict[str, list[float] | None] = {k: None for k in worst}
    for row in pts:
        x = row.tolist()
        mags = [abs(v) for v in x]
        for i in range(plant.n):
            fv = plant.f[i](x, 0.0)
            gv = plant.g[i](x, 0.0)
            slacks = {
                "f": plant.f_star[i](mags) - abs(fv),
                "g_lower": gv - plant.g_m,
                "g_upper": plant.g_star[i](mags) - gv,
            }
            for key, s in slacks.items():
                if s < worst[key]:
                    worst[key] = s
                    where[key] = x
    return {"worst_slack": worst, "at": where, "ok": all(v >= 0 for v in worst.values())}


# --- bundled examples -------------------------------------------------------


def _example1_plant() -> PlantModel:
    f = (
        lambda x, t=0.0: x[0] * x[0] - math.sin(x[0]),
        lambda x, t=0.0: x[0] * x[1] * x[1],
    )
    f_star = (
        lambda a: a[0] * a[0] + 1.0,
        lambda a: a[0] * a[1] * a[1],
    )
    return PlantModel(
        n=2,
        f=f,
        g=(_one, _one),
        f_star=f_star,
        g_star=(_const(1.0), _const(1.0)),
        g_m=1.0,
        x0=(1.0, 0.0),
        name="example1",
    )


def _example2_plant() -> PlantModel:
    f = (
        lambda x, t=0.0: x[0] + x[0] * math.exp(-0.5 * x[0]),
        lambda x, t=0.0: x[0] * math.sin(x[1]) + x[0] * x[1] * x[1],
    )
    g = (
        lambda x, t=0.0: 1.0 + math.sin(x[0] * x[0]),
        lambda x, t=0.0: 3.0 + math.cos(x[0]),
    )
    f_star = (
        lambda a: a[0] + a[0] * math.exp(0.5 * a[0]),
        lambda a: a[0] + a[0] * a[1] * a[1],
    )
    return PlantModel(
        n=2,
        f=f,
        g=g,
        f_star=f_star,
        g_star=(_const(2.0), _const(4.0)),
        g_m=1.0,
        x0=(0.5, 0.0),
        name="example2",
    )


EXAMPLE1_CONSTANTS = {
    "l0": 0.1,
    "ts": 1.0,
    "H": (5.0, 10.0),
    "gamma": (4.0, 0.4),
    "c": (0.1, 1.5),
    "N": (3, 3),
    # p1 = delta_M + 0.05 and p2 = 2 + delta_M + 1 with delta_1 = 2 + c0
    "eps": (0.05, 0.99),
    "c0": 0.01,
}

EXAMPLE2_CONSTANTS = {
    "ts": 1.0,
    "eps": (0.5, 0.5),
    "K": 2,
    # thresholds[m][i] = p_{i+1, m+1}
    "thresholds": ((0.04, 1.0), (0.05, 2.0)),
    # stage 1 as published; stage 2 k and N as published, M carried over from
    # stage 1 and c solved from the feasibility inequality
    "stage1": {"k": (2.0, 1.0), "M": (6.0, 0.1), "c": (0.1, 2.0), "N": (3, 3)},
    "stage2": {"k": (2.0, 2.0), "M": (6.0, 0.1), "N": (3, 5)},
    "reference": {"kind": "sinusoid", "amplitude": 1.0, "omega": 1.0},
    # worst-case argument values used for F_1*, F_2*
    "rho_dot_bound": 1.0,
}


def example1_eq85_rhs(rho: float, p1: float = 0.15, qx0: Sequence[float] = (1.0, 0.0)) -> float:
    """Right-hand side of the printed H_1 design inequality for example 1 (offsets 0.1 as printed)."""
    a = abs(qx0[0]) + 0.1
    return (p1 + rho * a) ** 2 + 1.0 + 0.5 * a + (abs(qx0[1]) + 0.1)


def builtin_scenario(name: str) -> tuple[PlantModel, dict]:
    """Plant plus the published controller inputs for a bundled example."""
    if name == "example1":
        plant = _example1_plant()
        inputs = dict(EXAMPLE1_CONSTANTS, kind="regulation", quantizer={"kind": "uniform", "l0": 0.1})
        return plant, inputs
    if name == "example2":
        plant = _example2_plant()
        inputs = dict(EXAMPLE2_CONSTANTS, kind="tracking")
        return plant, inputs
    raise ScenarioError(f"unknown builtin scenario {name!r} (known: {', '.join(BUILTINS)})")


BUILTINS = ("example1", "example2")


# --- DSL-defined plants -----------------------------------------------------


def _compile_majorant(text: str, n: int) -> MajorantFn:
    f = parse_expression(text).compile_state(n)
    return lambda a: f(a, 0.0)


def plant_from_config(cfg: dict) -> PlantModel:
    """Build a plant from the ``plant`` section of a scenario file."""
    if "builtin" in cfg:
        plant, _ = builtin_scenario(cfg["builtin"])
        if "x0" in cfg:
            plant = _with_x0(plant, cfg["x0"])
        return plant
    try:
        n = int(cfg["n"])
        f_txt = list(cfg["f"])
        fs_txt = list(cfg["f_star"])
    except KeyError as exc:
        raise ScenarioError(f"plant section missing key {exc.args[0]!r}") from None
    g_txt = list(cfg.get("g", ["1"] * n))
    gs_txt = list(cfg.get("g_star", g_txt if all(_is_number(s) for s in g_txt) else []))
    if len(gs_txt) != n:
        raise ScenarioError("plant.g_star is required when plant.g is not constant")
    for label, seq in (("f", f_txt), ("g", g_txt), ("f_star", fs_txt), ("g_star", gs_txt)):
        if len(seq) != n:
            raise ScenarioError(f"plant.{label} must have {n} entries, got {len(seq)}")
    for i, txt in enumerate(f_txt + g_txt):
        used = parse_expression(str(txt)).variables
        depth = i % n + 1
        too_deep = [v for v in used if v.startswith("x") and int(v[1:]) > depth]
        if too_deep:
            which = "f" if i < n else "g"
            raise ScenarioError(
                f"plant.{which}[{depth}] uses {sorted(too_deep)}; strict-feedback form allows x1..x{depth}"
            )
    x0 = tuple(float(v) for v in cfg.get("x0", [0.0] * n))
    if len(x0) != n:
        raise ScenarioError(f"plant.x0 must have {n} entries")
    return PlantModel(
        n=n,
        f=tuple(parse_expression(str(s)).compile_state(n) for s in f_txt),
        g=tuple(parse_expression(str(s)).compile_state(n) for s in g_txt),
        f_star=tuple(_compile_majorant(str(s), n) for s in fs_txt),
        g_star=tuple(_compile_majorant(str(s), n) for s in gs_txt),
        g_m=float(cfg.get("g_m", 1.0)),
        x0=x0,
        name=cfg.get("name", "dsl-plant"),
        source=dict(cfg),
    )


def _is_number(s) -> bool:
    try:
        float(s)
    except (TypeError, ValueError):
        return False
    return True


def _with_x0(plant: PlantModel, x0: Sequence[float]) -> PlantModel:
    x0 = tuple(float(v) for v in x0)
    return PlantModel(
        plant.n, plant.f, plant.g, plant.f_star, plant.g_star, plant.g_m, x0, plant.name, plant.source
    )


# --- random polynomial plants (property suites) -------------------------------


def _monomial(i: int, j: int) -> str:
    parts = [f"x1^{i}" if i > 1 else "x1"] * (i > 0) + [f"x2^{j}" if j > 1 else "x2"] * (j > 0)
    return "*".join(parts) or "1"


def _magnitude_monomial(i: int, j: int) -> str:
    return _monomial(i, j).replace("x1", "abs(x1)").replace("x2", "abs(x2)")


def random_polynomial_plant(rng, degree: int = 2, coef: float = 1.0, x0_box: float = 1.0) -> dict:
    """Plant section for a random second-order strict-feedback plant.

    f1 is a polynomial in x1, f2 a polynomial in x1, x2 (no constant terms,
    so the origin is an equilibrium), g = 1.  Each majorant is the sum of the
    absolute coefficients times the magnitude monomials plus a constant
    0.1, so it is positive and nondecreasing in every argument.
    """
    f1_terms = [(i, 0) for i in range(1, degree + 1)]
    f2_terms = [(i, j) for i in range(degree + 1) for j in range(degree + 1) if 0 < i + j <= degree]

    def build(terms):
        coefs = rng.uniform(-coef, coef, size=len(terms))
        f = " + ".join(f"({a:.6g})*{_monomial(i, j)}" for a, (i, j) in zip(coefs, terms))
        fs = " + ".join(f"{abs(a):.6g}*{_magnitude_monomial(i, j)}" for a, (i, j) in zip(coefs, terms)) + " + 0.1"
        return f, fs

    f1, f1s = build(f1_terms)
    f2, f2s = build(f2_terms)
    x0 = [float(v) for v in np.round(rng.uniform(-x0_box, x0_box, size=2), 6)]
    return {"n": 2, "f": [f1, f2], "g": ["1", "1"], "f_star": [f1s, f2s], "x0": x0, "name": "random-polynomial"}
