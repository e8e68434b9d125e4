"""Scenario files: JSON documents describing plant, controller and run settings."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .engine import DEFAULT_STEP, RegulationRunner, TrackingRunner
from .errors import BfppcError, ScenarioError
from .expr import parse_expression
from .plant import PlantModel, builtin_scenario, plant_from_config
from .quantizer import QuantizerModel
from .regulator import (
    RegulationControllerConfig,
    RegulationStage,
    check_regulation_feasibility,
    h0_arg_names,
    regulation_config_from_constants,
    regulation_h0_from_majorants,
    synthesize_regulation,
)
from .signals import PerformanceFunction, ReferenceSignal, performance_channels, reference_from_config
from .tracker import (
    SwitchSchedule,
    TrackingControllerConfig,
    TrackingStage,
    UpstreamGains,
    check_tracking_feasibility,
    f0_arg_names,
    f_star_from_bounds,
    synthesize_tracking_stage,
    tracking_f0_from_majorants,
    upstream_of,
)

BUNDLED = ("example1", "example1_synth", "example2")


@dataclass
class Scenario:
    name: str
    kind: str
    plant: PlantModel
    pfs: list[PerformanceFunction]
    step: float = DEFAULT_STEP
    t_end: float = 10.0
    force: bool = False
    quantizer: QuantizerModel | None = None
    regulation: RegulationControllerConfig | None = None
    tracking: TrackingControllerConfig | None = None
    schedule: SwitchSchedule | None = None
    output: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, repr=False)
    path: str | None = None

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def radii(self) -> list[float]:
        if self.kind == "regulation":
            return list(self.regulation.p)
        return list(self.schedule.thresholds[-1])

    def feasibility(self):
        if self.kind == "regulation":
            return check_regulation_feasibility(self.regulation)
        return check_tracking_feasibility(self.tracking)

    def build_controller(self):
        """Fresh controller with its own quantizer memory or switch index."""
        if self.kind == "regulation":
            return RegulationRunner(self.regulation, self.quantizer, self.plant.x0)
        sched = SwitchSchedule(self.schedule.thresholds, self.schedule.stages)
        return TrackingRunner(self.tracking, sched)

    def parameters(self) -> dict:
        """Controller parameters as plain data (what ``synth`` prints)."""
        if self.kind == "regulation":
            out = self.regulation.to_dict()
            out["quantizer"] = {"kind": self.quantizer.kind.value, "l0": self.quantizer.l0, "delta0": self.quantizer.delta0}
            return out
        return {
            "kind": "tracking",
            "K": self.schedule.K,
            "thresholds": [list(r) for r in self.schedule.thresholds],
            "stages": [
                {"k": list(s.k), "M": list(s.M), "c": list(s.c), "N": list(s.N)} for s in self.schedule.stages
            ],
            "eps": list(self.tracking.eps),
            "F_star": list(self.tracking.F_star),
            "a0": self.tracking.a0,
            "reference": {"Y0": self.tracking.reference.Y0, "Y1": self.tracking.reference.Y1},
            "performance": [pf.to_dict() for pf in self.pfs],
        }


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("bfppc") / "scenarios" / f"{name}.json"))


def resolve(path_or_name: str) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in BUNDLED:
        return bundled_path(stem)
    raise ScenarioError(f"scenario file {path_or_name!r} not found")


def load_scenario(path: str | Path) -> Scenario:
    """Read, validate and assemble a scenario (bundled names are accepted)."""
    p = resolve(str(path))
    text = p.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    sc = scenario_from_dict(doc)
    sc.path = str(p)
    return sc


def _vec(cfg: dict, key: str, n: int, cast=float, section: str = "controller") -> tuple:
    if key not in cfg:
        raise ScenarioError(f"{section}.{key} is required")
    val = cfg[key]
    if not isinstance(val, list):
        val = [val] * n
    if len(val) != n:
        raise ScenarioError(f"{section}.{key} must have {n} entries, got {len(val)}")
    try:
        return tuple(cast(v) for v in val)
    except (TypeError, ValueError):
        raise ScenarioError(f"{section}.{key} has a non-numeric entry") from None


def _odd_powers(cfg: dict, n: int, section: str) -> tuple[int, ...]:
    N = _vec(cfg, "N", n, float, section)
    for v in N:
        if v != int(v) or int(v) % 2 == 0 or v < 3:
            raise ScenarioError(f"{section}.N: N must be odd (an odd integer >= 3), got {v:g}")
    return tuple(int(v) for v in N)


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    for key in ("plant", "controller"):
        if key not in doc:
            raise ScenarioError(f"scenario is missing the {key!r} section")
    try:
        plant = plant_from_config(doc["plant"])
    except BfppcError as exc:
        raise ScenarioError(f"plant: {exc}") from None
    n = plant.n
    ctrl = doc["controller"]
    kind = ctrl.get("kind")
    if kind not in ("regulation", "tracking"):
        raise ScenarioError("controller.kind must be exactly one of 'regulation' or 'tracking'")
    sim = doc.get("simulation", {})
    step = float(sim.get("step", DEFAULT_STEP))
    t_end = float(sim.get("t_end", 10.0))
    if not (step > 0 and t_end > 0):
        raise ScenarioError("simulation.step and simulation.t_end must be positive")
    try:
        pfs = performance_channels(doc.get("performance"), n)
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"performance: {exc}") from None
    sc = Scenario(
        name=doc.get("name", plant.name),
        kind=kind,
        plant=plant,
        pfs=pfs,
        step=step,
        t_end=t_end,
        force=bool(sim.get("force", False)),
        output=dict(doc.get("output", {})),
        source=doc,
    )
    if kind == "regulation":
        if "quantizer" not in doc:
            raise ScenarioError("a regulation scenario needs a quantizer section")
        if "reference" in doc:
            raise ScenarioError("regulation scenarios drive x1 to zero; remove the reference section")
        _build_regulation(sc, doc["quantizer"], ctrl)
    else:
        if "quantizer" in doc:
            raise ScenarioError("quantizer section is only valid for regulation scenarios")
        _build_tracking(sc, doc.get("reference"), ctrl)
    return sc


# --- regulation ---------------------------------------------------------------


def _dsl_h0(texts: Sequence[str], n: int):
    out = []
    for i in range(1, n + 1):
        args = h0_arg_names(i, n)
        ups = [f"{g}{j}" for j in range(1, i) for g in ("gamma", "H", "c", "N")]
        expr = parse_expression(str(texts[i - 1]), args + ups)
        fn = expr.compile(args + ups)

        def h0(a, upstream, fn=fn, i=i):
            flat = [v for st in upstream[: i - 1] for v in (st.gamma, st.H, st.c, st.N)]
            return fn(*a, *flat)

        out.append(h0)
    return out


def _h0_evaluators(ctrl: dict, plant: PlantModel):
    spec = ctrl.get("H0")
    if spec is None:
        return None
    if spec == "majorants" or isinstance(spec, dict):
        opts = spec if isinstance(spec, dict) else {}
        return regulation_h0_from_majorants(
            plant, float(opts.get("init_offset", ctrl.get("init_offset", 1.0))), float(opts.get("floor", 0.0))
        )
    if isinstance(spec, list) and len(spec) == plant.n:
        return _dsl_h0(spec, plant.n)
    raise ScenarioError("controller.H0 must be 'majorants', an options object, or one expression per stage")


def _build_regulation(sc: Scenario, qcfg: dict, ctrl: dict) -> None:
    n = sc.n
    try:
        q = QuantizerModel(qcfg.get("kind", "uniform"), float(qcfg["l0"]), qcfg.get("delta0"))
    except KeyError:
        raise ScenarioError("quantizer.l0 is required") from None
    except ValueError as exc:
        raise ScenarioError(f"quantizer: {exc}") from None
    pf = sc.pfs[0]
    if any(p != pf for p in sc.pfs):
        raise ScenarioError("regulation uses one performance function for every channel")
    N = _odd_powers(ctrl, n, "controller")
    eps = _vec(ctrl, "eps", n)
    c0 = float(ctrl.get("c0", 0.01))
    H0 = _h0_evaluators(ctrl, sc.plant)
    if ctrl.get("auto", False):
        if H0 is None:
            raise ScenarioError("controller.auto needs controller.H0 bound evaluators")
        cfg = synthesize_regulation(sc.plant, q, pf, H0, eps, c0, N, gamma_margin=float(ctrl.get("gamma_margin", 1.05)))
    else:
        if "H" not in ctrl:
            raise ScenarioError("controller.H constants are required unless controller.auto is true")
        cfg = regulation_config_from_constants(
            n, _vec(ctrl, "gamma", n), _vec(ctrl, "c", n), N, _vec(ctrl, "H", n), eps, c0, q, pf, sc.plant.x0, H0
        )
    sc.quantizer = q
    sc.regulation = cfg


# --- tracking -----------------------------------------------------------------


def _dsl_f0(texts: Sequence[str], n: int):
    out = []
    for i in range(1, n + 1):
        args = f0_arg_names(i, n)
        ups = [f"{g}{j}" for j in range(1, i) for g in ("k", "M", "c", "N", "eps")]
        fn = parse_expression(str(texts[i - 1]), args + ups).compile(args + ups)

        def f0(a, upstream, fn=fn, i=i):
            flat = [v for g in upstream[: i - 1] for v in (g.k, g.M, g.c, g.N, g.eps)]
            return fn(*a, *flat)

        out.append(f0)
    return out


def _build_tracking(sc: Scenario, rcfg: dict | None, ctrl: dict) -> None:
    n = sc.n
    try:
        ref = reference_from_config(rcfg, sc.t_end)
    except (ValueError, KeyError) as exc:
        raise ScenarioError(f"reference: {exc}") from None
    eps = _vec(ctrl, "eps", n)
    stages_cfg = ctrl.get("stages")
    thresholds = ctrl.get("thresholds")
    if not stages_cfg or not thresholds or len(stages_cfg) != len(thresholds):
        raise ScenarioError("controller.stages and controller.thresholds must be non-empty and equally long")
    K = int(ctrl.get("K", len(stages_cfg)))
    if K != len(stages_cfg):
        raise ScenarioError(f"controller.K = {K} but {len(stages_cfg)} stages are given")
    thr = tuple(tuple(float(v) for v in row) for row in thresholds)
    if any(len(row) != n for row in thr):
        raise ScenarioError(f"each controller.thresholds row needs {n} entries")
    rho_dot_bound = ctrl.get("rho_dot_bound")
    rho_dot_bound = float(rho_dot_bound) if rho_dot_bound is not None else None

    spec = ctrl.get("F0")
    F0 = None
    if spec == "majorants":
        F0 = tracking_f0_from_majorants(sc.plant)
    elif isinstance(spec, list):
        F0 = _dsl_f0(spec, n)
    elif spec is not None:
        raise ScenarioError("controller.F0 must be 'majorants' or one expression per stage")

    stages: list[TrackingStage] = []
    F_star: list[float] | None = None
    p_final = thr[-1]
    for m, st in enumerate(stages_cfg):
        section = f"controller.stages[{m}]"
        k = _vec(st, "k", n, section=section)
        M = _vec(st, "M", n, section=section)
        N = _odd_powers(st, n, section)
        if st.get("c") == "auto":
            if m != K - 1:
                raise ScenarioError(f"{section}.c = 'auto' is only meaningful for the last stage")
            if F0 is None:
                raise ScenarioError("automatic stage gains need controller.F0")
            stage, F_star = synthesize_tracking_stage(
                sc.plant, sc.pfs, ref, p_final, F0, k, M, N, eps, rho_dot_bound=rho_dot_bound
            )
        else:
            try:
                stage = TrackingStage(k, M, _vec(st, "c", n, section=section), N)
            except ValueError as exc:
                raise ScenarioError(f"{section}: {exc}") from None
        stages.append(stage)

    final = stages[-1]
    if F_star is None:
        if "F_star" in ctrl:
            F_star = list(_vec(ctrl, "F_star", n))
        elif F0 is not None:
            F_star = f_star_from_bounds(sc.plant, sc.pfs, ref, p_final, F0, upstream_of(final, eps), rho_dot_bound)
        else:
            raise ScenarioError("tracking scenarios need controller.F0 or controller.F_star")
    base = TrackingControllerConfig(
        n=n,
        k=final.k,
        M=final.M,
        c=final.c,
        eps=eps,
        N=final.N,
        p=p_final,
        pfs=tuple(sc.pfs),
        reference=ref,
        x0=sc.plant.x0,
        F_star=tuple(F_star),
    )
    sc.tracking = base
    sc.schedule = SwitchSchedule(thr, tuple(stages))
    sc.tracking_F0 = F0  # type: ignore[attr-defined]
