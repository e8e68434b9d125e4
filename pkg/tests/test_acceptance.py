"""Acceptance criteria, one test each.

Every test appends a single ``ACCEPTANCE n PASS/FAIL: ...`` line that is
echoed in the terminal summary, then asserts the criterion at its stated
tolerance.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from bfppc.audit import audit_majorization, check_w_function, tanh_bound_check
from bfppc.cli import bound_audits, main
from bfppc.engine import rk4_step, simulate, trace_stats
from bfppc.plant import example1_eq85_rhs, random_polynomial_plant
from bfppc.quantizer import QuantizerModel
from bfppc.regulator import check_regulation_feasibility, envelope_radii
from bfppc.scenario import load_scenario, scenario_from_dict

from conftest import ACCEPTANCE_LINES


def record(n: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def random_regulation_doc(rng: np.random.Generator) -> dict:
    """Random n=2 polynomial plant with a synthesized regulation controller."""
    return {
        "name": "random",
        "plant": random_polynomial_plant(rng),
        "quantizer": {"kind": "uniform", "l0": float(rng.uniform(0.01, 0.2))},
        "performance": {"family": "cosine_taper", "ts": 1.0},
        "controller": {"kind": "regulation", "auto": True, "N": [3, 3], "eps": [0.3, 1.0], "c0": 0.01,
                       "H0": "majorants"},
        "simulation": {"step": 1e-4, "t_end": 10.0},
    }


def stable_step(sc) -> float:
    # keep h * gamma_i * H_i well inside the stability region of the held step
    cfg = sc.regulation
    return min(1e-4, 0.5 / max(g * h for g, h in zip(cfg.gamma, cfg.H)))


def test_1_example1_reproduction(tmp_path):
    started = time.perf_counter()
    code = main(["run", "example1", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - started
    report = json.loads((tmp_path / "example1" / "report.json").read_text())
    sc = load_scenario("example1")
    cfg = sc.regulation
    p, _ = envelope_radii(cfg.gamma, cfg.H, cfg.eps, cfg.delta_M, cfg.c0)
    band = next(a for a in report["audits"] if a["check"] == "output band")
    ch = report["stats"]["channels"]
    ok = (
        code == 0
        and elapsed < 10.0
        and report["step"] == 1e-4
        and report["t_end"] == 10.0
        and math.isclose(p[0], 0.15)
        and band["pass"]
        and band["details"]["violations"] == 0
        and ch[0]["first_violation_time"] is None
        and ch[1]["max_abs_e"] <= p[1]
    )
    record(
        1, ok,
        f"example1 run {elapsed:.2f}s (<10), band violations {band['details']['violations']}, "
        f"max|e1|={ch[0]['max_abs_e']:.4f}<=0.15, max|e2|={ch[1]['max_abs_e']:.4f}<=p2={p[1]:.4f}",
    )
    assert ok


def test_2_example2_reproduction(tmp_path):
    started = time.perf_counter()
    code = main(["run", "example2", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - started
    from bfppc.traceio import read_trace_csv

    tr = read_trace_csv(tmp_path / "example2" / "trace.csv")
    # recompute the tracking-error band directly from x1, yd and rho
    dev = np.abs(tr.x[:, 0] - tr.yd - tr.rho * (tr.x[0, 0] - tr.yd[0]))
    sigma = tr.sigma
    ok = (
        code == 0
        and elapsed < 10.0
        and tr.t[-1] == pytest.approx(15.0)
        and dev.max() <= 0.05
        and bool(np.all(np.diff(sigma) >= 0))
        and sigma.max() <= 2
    )
    record(
        2, ok,
        f"example2 run {elapsed:.2f}s (<10), max band deviation {dev.max():.4f}<=0.05, "
        f"sigma nondecreasing in [{sigma.min()}, {sigma.max()}]",
    )
    assert ok


def test_3_quantizer_contract():
    rng = np.random.default_rng(3)
    q = QuantizerModel("uniform", 0.1)
    xs = np.concatenate([rng.uniform(-1.0, 1.0, 400_000), rng.uniform(-1e3, 1e3, 400_000),
                         rng.normal(0.0, 10.0, 200_000)])
    levels = [q.level(x) for x in xs.tolist()]
    err = np.abs(np.asarray(levels) - xs)
    failures = int(np.count_nonzero(err > q.delta0))
    order = np.argsort(xs)
    mono = bool(np.all(np.diff(np.asarray(levels)[order]) >= 0))
    idem = all(q.level(v) == v for v in levels[:100_000])
    ok = failures == 0 and mono and idem and xs.size == 1_000_000
    record(3, ok, f"{xs.size} inputs, {failures} bound failures (max err {err.max():.6f} <= 0.05), "
                  f"monotone={mono}, idempotent={idem}")
    assert ok


def test_4_feasibility_soundness():
    rng = np.random.default_rng(4)
    worst, failures = math.inf, 0
    for _ in range(100):
        sc = scenario_from_dict(random_regulation_doc(rng))
        report = check_regulation_feasibility(sc.regulation)
        lowest = min(it.residual for it in report.items)
        worst = min(worst, lowest)
        if not report.passed or lowest < 0:
            failures += 1
    ok = failures == 0 and worst >= 0
    record(4, ok, f"100 synthesized random plants, {failures} infeasible, smallest residual {worst:.3g} >= 0")
    assert ok


def test_5_invariant_set_property():
    rng = np.random.default_rng(5)
    started = time.perf_counter()
    violations, diverged, worst_ratio = 0, 0, 0.0
    for _ in range(50):
        sc = scenario_from_dict(random_regulation_doc(rng))
        tr = simulate(sc, step=stable_step(sc), t_end=10.0)
        if tr.failure is not None:
            diverged += 1
            continue
        stats = trace_stats(tr, sc.radii)
        for ch in stats["channels"]:
            worst_ratio = max(worst_ratio, ch["max_abs_e"] / ch["radius"])
            if ch["first_violation_time"] is not None:
                violations += 1
    elapsed = time.perf_counter() - started
    ok = violations == 0 and diverged == 0 and elapsed < 300.0
    record(5, ok, f"50 random feasible scenarios over [0, 10], {violations} violations, {diverged} divergences, "
                  f"max |e_i|/p_i = {worst_ratio:.3f}, {elapsed:.1f}s (<300)")
    assert ok


def test_6_tanh_bound():
    rng = np.random.default_rng(6)
    worst_over = -math.inf
    ratios = []
    for _ in range(20):
        M, eps = float(rng.uniform(0.05, 20.0)), float(rng.uniform(0.01, 5.0))
        rep = tanh_bound_check(M, eps, points=100_000)
        ratios.append(rep.details["max_gap_over_eps"])
        worst_over = max(worst_over, rep.details["max_gap"] - 0.3 * eps)
    ok = worst_over <= 0 and all(abs(r - 0.2785) <= 0.001 for r in ratios)
    record(6, ok, f"20 random (M, eps): max gap/eps in [{min(ratios):.5f}, {max(ratios):.5f}] "
                  f"(0.2785 +- 0.001, <= 0.3)")
    assert ok


def test_7_barrier_singularity_contrast(tmp_path):
    out = tmp_path / "demo.json"
    code = main(["audit", "--check", "ppc-demo", "--json-out", str(out)])
    (rep,) = json.loads(out.read_text())
    d = rep["details"]
    ok = code == 0 and d["singular_barrier_inputs"] > 0 and d["finite_regulation_inputs"] == d["inputs"]
    record(7, ok, f"demo exit {code}: {d['singular_barrier_inputs']} singular barrier inputs, "
                  f"regulation finite on {d['finite_regulation_inputs']}/{d['inputs']}")
    assert ok


def test_8_integrator_order():
    def return_error(h_nominal: float) -> tuple[float, float]:
        steps = math.ceil(2 * math.pi / h_nominal)
        h = 2 * math.pi / steps
        x, t = [1.0, 0.0], 0.0
        for _ in range(steps):
            x = rk4_step(lambda s, _t: [s[1], -s[0]], x, t, h)
            t += h
        return h, math.hypot(x[0] - 1.0, x[1])

    data = [return_error(h) for h in (1e-2, 5e-3, 2.5e-3)]
    ratios = [(e1 / e2) / (h1 / h2) ** 4 for (h1, e1), (h2, e2) in zip(data, data[1:])]
    ok = all(0.5 <= r <= 2.0 for r in ratios)
    record(8, ok, "errors " + ", ".join(f"{e:.3e}@h={h:.5f}" for h, e in data)
                  + "; ratio/(h ratio)^4 = " + ", ".join(f"{r:.3f}" for r in ratios) + " (within [0.5, 2])")
    assert ok


def test_9_w_function_audits():
    axes = [np.linspace(0.0, 2.0, 21)] * 2
    remark = [
        check_w_function(lambda a, b: a * a + a + a * b, axes, name="remark example 1"),
        check_w_function(lambda a, b: b * a * a + math.exp(b), axes, name="remark example 2"),
    ]
    bundled = []
    for name in ("example1", "example1_synth", "example2"):
        bundled += bound_audits(load_scenario(name))
    rho = [np.linspace(0.0, 1.0, 1001)]
    h5 = audit_majorization(lambda r: 5.0, example1_eq85_rhs, rho)
    h3 = audit_majorization(lambda r: 3.0, example1_eq85_rhs, rho)
    rhs_max = h5.details["rhs_max"]
    ok = (
        all(r.passed for r in remark)
        and len(bundled) == 6
        and all(r.passed for r in bundled)
        and h5.passed
        and not h3.passed
        and abs(rhs_max - 3.2125) <= 0.01
    )
    record(9, ok, f"remark examples pass={[r.passed for r in remark]}, {sum(r.passed for r in bundled)}/"
                  f"{len(bundled)} bundled bounds pass, H1=5 pass={h5.passed}, H1=3 pass={h3.passed}, "
                  f"grid max {rhs_max:.4f}")
    assert ok
