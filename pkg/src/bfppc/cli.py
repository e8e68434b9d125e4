"""Command-line interface: ``bfppc run|audit|synth|list``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .audit import (
    AuditReport,
    audit_majorization,
    check_w_function,
    regulation_bound_audits,
    singularity_demo,
    tanh_bound_check,
    time_varying_envelope,
    tracking_bound_audits,
    verify_envelope,
)
from .engine import simulate, trace_stats
from .errors import BfppcError, InfeasibleError
from .expr import parse_expression
from .plant import example1_eq85_rhs
from .regulator import synthesize_regulation
from .scenario import BUNDLED, Scenario, load_scenario, resolve
from .traceio import read_trace_csv, write_trace_csv
from .tracker import upstream_of

log = logging.getLogger("bfppc")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_OUT = "bfppc_out"


def output_root(flag: str | None) -> Path:
    """``--out`` wins, then ``$BFPPC_OUT``, then ./bfppc_out."""
    return Path(flag or os.environ.get("BFPPC_OUT") or DEFAULT_OUT)


def report_schema() -> dict:
    return json.loads((resources.files("bfppc") / "schemas" / "report.schema.json").read_text())


def validate_report(report: dict) -> None:
    import jsonschema

    jsonschema.validate(report, report_schema())


# --- run ------------------------------------------------------------------------


RUN_AUDIT_NODES = 1_000


def bound_audits(sc: Scenario, max_points: int = 5_000) -> list[AuditReport]:
    """W-function audits of the scenario's bound evaluators (sampled grid nodes)."""
    if sc.kind == "regulation":
        return regulation_bound_audits(sc.regulation, max_points=max_points)
    F0 = getattr(sc, "tracking_F0", None)
    if F0 is None:
        return []
    rd = sc.source["controller"].get("rho_dot_bound")
    return tracking_bound_audits(
        sc.plant, sc.pfs, sc.tracking.reference, sc.tracking.p, F0,
        upstream_of(sc.schedule.stages[-1], sc.tracking.eps), None if rd is None else float(rd),
        max_points=max_points,
    )


def run_scenario(
    sc: Scenario,
    out_dir: Path,
    step: float | None = None,
    t_end: float | None = None,
    force: bool = False,
    plots: bool = True,
) -> dict:
    """Simulate, audit and persist one scenario; returns the report dict."""
    out_dir.mkdir(parents=True, exist_ok=True)
    feas = sc.feasibility()
    forced = force or sc.force
    if not feas.passed:
        if not forced:
            raise InfeasibleError(f"scenario {sc.name!r} fails the feasibility inequalities (use --force)", feas)
        log.warning("%s: infeasible controller parameters, running anyway (forced)", sc.name)
    trace = simulate(sc, step, t_end, force=True)
    csv_path = write_trace_csv(trace, out_dir / "trace.csv")
    # statistics come from the persisted trace so they round-trip through the CSV
    stats = trace_stats(read_trace_csv(csv_path), sc.radii)
    audits = verify_envelope(trace, sc.radii, sc.plant.x0[0])
    audits += bound_audits(sc, RUN_AUDIT_NODES)
    informational = time_varying_envelope(trace, sc.regulation) if sc.kind == "regulation" and len(trace) else []
    failure = trace.failure
    report = {
        "scenario": sc.name,
        "kind": sc.kind,
        "n": sc.n,
        "step": trace.meta["step"],
        "t_end": trace.meta["t_end"],
        "forced": bool(forced),
        "feasibility": feas.to_dict(),
        "stats": stats,
        "audits": [a.to_dict() for a in audits],
        "informational": [a.to_dict() for a in informational],
        "divergence_time": None if failure is None else float(failure["time"]),
        "failure": failure,
        "events": {
            "count": len(trace.events),
            "switches": [ev for ev in trace.events if ev["kind"] == "switch"],
            "first_level_changes": [ev for ev in trace.events if ev["kind"] == "level"][:50],
        },
        "pass": failure is None and all(a.passed for a in audits),
        "parameters": sc.parameters(),
        "meta": {k: v for k, v in trace.meta.items()},
        "artifacts": {"trace": csv_path.name},
    }
    if plots:
        from .plots import write_figures

        report["artifacts"]["figures"] = write_figures(trace, sc, out_dir)
    validate_report(report)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, default=_json_default))
    return report


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _run_one(path: str, root: str, step, t_end, force, plots) -> tuple[str, int, str]:
    """Worker entry point; loads its own scenario so nothing mutable is shared."""
    try:
        sc = load_scenario(path)
        rep = run_scenario(sc, Path(root) / sc.name, step, t_end, force, plots)
    except InfeasibleError as exc:
        return path, EXIT_USAGE, str(exc)
    except BfppcError as exc:
        return path, EXIT_USAGE, str(exc)
    status = EXIT_OK if rep["pass"] else EXIT_FAIL
    summary = ", ".join(f"max|e{c['channel']}|={c['max_abs_e']:.4g}" for c in rep["stats"]["channels"])
    if rep["divergence_time"] is not None:
        summary += f", diverged at t={rep['divergence_time']:g}"
    return path, status, f"{sc.name}: {'PASS' if rep['pass'] else 'FAIL'} ({summary}) -> {Path(root) / sc.name}"


def cmd_run(args: argparse.Namespace) -> int:
    targets = list(BUNDLED) if args.all else args.scenario
    if not targets:
        print("run: give a scenario file or --all", file=sys.stderr)
        return EXIT_USAGE
    root = output_root(args.out)
    jobs = [(t, str(root), args.step, args.t_end, args.force, not args.no_plots) for t in targets]
    if len(jobs) > 1 and args.jobs != 1:
        with ProcessPoolExecutor(max_workers=args.jobs or None) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]
    worst = EXIT_OK
    for _, status, msg in results:
        print(msg, file=sys.stdout if status == EXIT_OK else sys.stderr)
        worst = max(worst, status)
    return worst


# --- audit ----------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _audit_w(args) -> list[AuditReport]:
    if args.expr:
        expr = parse_expression(args.expr, lambda name: name.startswith("z"))
        names = sorted(expr.variables, key=lambda v: int(v[1:]))
        upper = _floats(args.upper) if args.upper else [2.0] * len(names)
        if len(upper) != len(names):
            raise BfppcError(f"--upper needs {len(names)} values for {names}")
        fn = expr.compile(names)
        axes = [np.linspace(0.0, u, args.points) for u in upper]
        return [check_w_function(fn, axes, name=f"W-function {args.expr}")]
    reports = []
    for name in args.scenario or BUNDLED:
        sc = load_scenario(name)
        for rep in bound_audits(sc):
            rep.check = f"{sc.name}: {rep.check}"
            reports.append(rep)
    return reports


def _audit_majorize(args) -> list[AuditReport]:
    rho_axis = [np.linspace(0.0, 1.0, args.points)]
    H1 = args.H1
    return [
        audit_majorization(
            lambda r: H1, lambda r: example1_eq85_rhs(r, p1=args.p1), rho_axis, name=f"H1 = {H1:g} majorizes stage-1 target"
        )
    ]


def _audit_tanh(args) -> list[AuditReport]:
    return [tanh_bound_check(args.M, args.eps, bound=args.bound, points=args.points)]


def _audit_envelope(args) -> list[AuditReport]:
    if args.trace:
        if not args.radii:
            raise BfppcError("--trace needs --radii")
        return verify_envelope(read_trace_csv(args.trace), _floats(args.radii))
    reports = []
    for name in args.scenario or BUNDLED:
        sc = load_scenario(name)
        trace = simulate(sc, args.step, args.t_end, force=True)
        for rep in verify_envelope(trace, sc.radii, sc.plant.x0[0]):
            rep.check = f"{sc.name}: {rep.check}"
            reports.append(rep)
    return reports


def _audit_ppc(args) -> list[AuditReport]:
    sc = load_scenario((args.scenario or ["example1"])[0])
    if sc.kind != "regulation":
        raise BfppcError("the barrier contrast needs a quantized regulation scenario")
    return [singularity_demo(sc.regulation, sc.quantizer, sc.plant.x0, k=args.k)]


AUDITS = {
    "w": _audit_w,
    "majorize": _audit_majorize,
    "tanh": _audit_tanh,
    "envelope": _audit_envelope,
    "ppc-demo": _audit_ppc,
}


def cmd_audit(args: argparse.Namespace) -> int:
    if args.points is None:
        args.points = {"tanh": 100_000, "majorize": 1001}.get(args.check, 21)
    reports = AUDITS[args.check](args)
    doc = [r.to_dict() for r in reports]
    text = json.dumps(doc, indent=2, default=_json_default)
    if args.json_out:
        Path(args.json_out).write_text(text)
    print(text)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.check}", file=sys.stderr)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# --- synth / list ---------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    sc = load_scenario(args.scenario)
    if sc.kind == "regulation":
        cfg = sc.regulation
        if cfg.H0 is None:
            raise BfppcError("synthesis needs controller.H0 bound evaluators")
        cfg = synthesize_regulation(
            sc.plant, sc.quantizer, cfg.pf, cfg.H0, cfg.eps, cfg.c0, cfg.N, gamma_margin=args.margin
        )
        sc.regulation = cfg
    out = {"scenario": sc.name, "parameters": sc.parameters(), "feasibility": sc.feasibility().to_dict()}
    print(json.dumps(out, indent=2, default=_json_default))
    return EXIT_OK if out["feasibility"]["pass"] else EXIT_FAIL


def cmd_list(args: argparse.Namespace) -> int:
    for name in BUNDLED:
        doc = json.loads(resolve(name).read_text())
        print(f"{name:16s} {doc['controller']['kind']:11s} {doc.get('description', '')}")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bfppc", description="Barrier-free prescribed-performance control toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate scenarios and write trace, report and figures")
    run.add_argument("scenario", nargs="*", help="scenario file or bundled name")
    run.add_argument("--all", action="store_true", help="run every bundled scenario")
    run.add_argument("--step", type=float, default=None, help="integration step (s)")
    run.add_argument("--t-end", type=float, default=None, help="horizon (s)")
    run.add_argument("--force", action="store_true", help="run even if the gains are infeasible")
    run.add_argument("--out", default=None, help="output root (default $BFPPC_OUT or ./bfppc_out)")
    run.add_argument("--jobs", type=int, default=0, help="parallel workers for several scenarios (0 = auto)")
    run.add_argument("--no-plots", action="store_true", help="skip SVG figures")
    run.set_defaults(func=cmd_run)

    au = sub.add_parser("audit", help="numerical side-condition audits")
    au.add_argument("--check", required=True, choices=sorted(AUDITS))
    au.add_argument("--scenario", action="append", help="scenario file or bundled name (repeatable)")
    au.add_argument("--points", type=int, default=None, help="grid points per axis")
    au.add_argument("--expr", help="w: expression in z1..zk to audit instead of scenario bounds")
    au.add_argument("--upper", help="w: comma-separated axis upper ends for --expr")
    au.add_argument("--H1", type=float, default=5.0, help="majorize: candidate stage-1 constant")
    au.add_argument("--p1", type=float, default=0.15, help="majorize: first-stage radius")
    au.add_argument("--M", type=float, default=1.0, help="tanh: gain M")
    au.add_argument("--eps", type=float, default=1.0, help="tanh: smoothing eps")
    au.add_argument("--bound", type=float, default=0.3, help="tanh: claimed bound / eps")
    au.add_argument("--k", type=float, default=1.0, help="ppc-demo: barrier gain")
    au.add_argument("--trace", help="envelope: audit an existing trace.csv")
    au.add_argument("--radii", help="envelope: comma-separated radii for --trace")
    au.add_argument("--step", type=float, default=None)
    au.add_argument("--t-end", type=float, default=None)
    au.add_argument("--json-out", help="also write the reports to this file")
    au.set_defaults(func=cmd_audit)

    sy = sub.add_parser("synth", help="print gains that satisfy the feasibility inequalities")
    sy.add_argument("scenario")
    sy.add_argument("--margin", type=float, default=1.05, help="gamma = margin * lower bound")
    sy.set_defaults(func=cmd_synth)

    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except BfppcError as exc:
        print(f"bfppc: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
