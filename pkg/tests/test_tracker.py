import math
from dataclasses import replace

import numpy as np
import pytest

from bfppc.errors import BfppcError
from bfppc.plant import PlantModel, builtin_scenario
from bfppc.signals import PerformanceFunction, constant_reference, sinusoid_reference
from bfppc.tracker import (
    SwitchSchedule,
    TrackingStage,
    check_tracking_feasibility,
    f_star_from_bounds,
    law,
    switch_update,
    synthesize_tracking_stage,
    tracking_control,
    tracking_f0_from_majorants,
    tracking_residuals,
    upstream_of,
)

PF = PerformanceFunction.cosine(1.0)
STAGE1 = TrackingStage((2.0, 1.0), (6.0, 0.1), (0.1, 2.0), (3, 3))
STAGE2 = TrackingStage((2.0, 2.0), (6.0, 0.1), (0.1, 2.0), (3, 5))


def schedule():
    return SwitchSchedule(((0.04, 1.0), (0.05, 2.0)), (STAGE1, STAGE2))


def zero_plant(g_m: float = 1.0) -> PlantModel:
    zero = lambda *_: 0.0  # noqa: E731
    one = lambda *_: 1.0  # noqa: E731
    return PlantModel(2, (zero, zero), (one, one), (zero, zero), (one, one), g_m, (0.0, 0.0), "zero")


class TestLaw:
    def test_stage_one_value(self):
        # direct evaluation: -0.08 - 6*tanh(0.48) - 0.1*0.04**3
        expected = -0.08 - 6 * math.tanh(0.48) - 0.1 * 0.04**3
        assert law(2.0, 6.0, 0.1, 3, 0.5, 0.04) == pytest.approx(expected, abs=1e-15)
        assert law(2.0, 6.0, 0.1, 3, 0.5, 0.04) == pytest.approx(-2.757468, abs=1e-6)

    def test_odd(self):
        assert law(2.0, 6.0, 0.1, 3, 0.5, -0.04) == -law(2.0, 6.0, 0.1, 3, 0.5, 0.04)

    def test_no_pole(self):
        # magnitude grows monotonically, so the sup on |e| <= R sits at the edge
        es = np.linspace(0, 1e6, 10_001)
        vals = [abs(law(2.0, 6.0, 0.1, 3, 0.5, e)) for e in es]
        assert all(math.isfinite(v) for v in vals)
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert max(vals) == vals[-1]


class TestTrackingControl:
    def test_zero_error_at_start(self, example2):
        e, alpha, u = tracking_control(example2.tracking, [0.5, 0.0], 0.0)
        assert e == [0.0, 0.0] and u == 0.0

    def test_error_definition(self, example2):
        cfg = example2.tracking.with_stage(STAGE1)
        t, x = 0.7, [0.9, -0.3]
        e, alpha, u = tracking_control(cfg, x, t)
        e1 = x[0] - math.sin(t) - PF(t) * (0.5 - 0.0)
        a1 = law(2.0, 6.0, 0.1, 3, 0.5, e1)
        e2 = x[1] - a1 - PF(t) * 0.0
        assert e == pytest.approx([e1, e2]) and alpha[0] == pytest.approx(a1)
        assert u == pytest.approx(law(1.0, 0.1, 2.0, 3, 0.5, e2))

    def test_dimension(self, example2):
        with pytest.raises(ValueError):
            tracking_control(example2.tracking, [0.5], 0.0)


class TestFeasibility:
    ARGS = dict(k=[2.0], M=[6.0], c=[0.1], N=[3], eps=[0.5], p=[0.05])

    def test_residual_pass(self):
        (r,) = tracking_residuals(F_star=[3.0], **self.ARGS)
        assert r == pytest.approx(0.1 + 6 + 1.25e-5 - 3 - 3, abs=1e-12)
        assert r >= 0

    def test_residual_fail(self):
        (r,) = tracking_residuals(F_star=[4.0], **self.ARGS)
        assert r == pytest.approx(-0.8999875, abs=1e-12)

    def test_raising_M_restores(self):
        args = dict(self.ARGS, M=[7.0])
        assert tracking_residuals(F_star=[4.0], **args)[0] >= 0

    def test_bundled_passes(self, example2):
        report = check_tracking_feasibility(example2.tracking)
        assert report.passed and report.to_dict()["pass"] is True

    def test_needs_f_star(self, example2):
        with pytest.raises(BfppcError):
            check_tracking_feasibility(replace(example2.tracking, F_star=()))


class TestSwitching:
    def test_within(self):
        s = schedule()
        assert switch_update(s, [0.03, 0.5]) == 1

    def test_increment(self):
        s = schedule()
        assert switch_update(s, [0.05, 0.5], t=1.0) == 2
        assert s.history == [(1.0, 2)]

    def test_cap(self):
        s = schedule()
        s.sigma = 2
        assert switch_update(s, [100.0, 100.0]) == 2

    def test_never_decrements(self):
        s = schedule()
        switch_update(s, [0.1, 0.0])
        assert switch_update(s, [0.0, 0.0]) == 2

    def test_thresholds_must_increase(self):
        with pytest.raises(ValueError):
            SwitchSchedule(((0.05, 1.0), (0.04, 2.0)), (STAGE1, STAGE2))

    def test_reset(self):
        s = schedule()
        switch_update(s, [1.0, 0.0], t=0.1)
        s.reset()
        assert s.sigma == 1 and s.history == []

    def test_even_power_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            TrackingStage((1.0,), (1.0,), (1.0,), (2,))


class TestFStar:
    def test_example2_first_channel(self):
        plant = builtin_scenario("example2")[0]
        F0 = tracking_f0_from_majorants(plant)
        # worst-case arguments (1, 1, 0.05, 2, 1, 1, 0.5, 0)
        val = F0[0]([1.0, 1.0, 0.05, 2.0, 1.0, 1.0, 0.5, 0.0], [])
        x1 = 0.05 + 1.0 + 0.5
        assert val == pytest.approx(x1 + x1 * math.exp(0.5 * x1) + 2 * 2.0 + 1.0 + 1.0 * 0.5)
        assert val == pytest.approx(10.41442, abs=1e-5)

    def test_bundled_matches_direct(self, example2):
        plant = example2.plant
        F = f_star_from_bounds(
            plant, example2.pfs, example2.tracking.reference, (0.05, 2.0), tracking_f0_from_majorants(plant),
            upstream_of(example2.schedule.stages[-1], (0.5, 0.5)), rho_dot_bound=1.0,
        )
        assert F[0] == pytest.approx(10.41442, abs=1e-5)
        assert F == pytest.approx(list(example2.tracking.F_star))

    def test_zero_plant_reduces_to_coupling(self):
        plant = zero_plant()
        F = f_star_from_bounds(plant, [PF, PF], constant_reference(0.0), (0.3, 0.7), tracking_f0_from_majorants(plant),
                               upstream_of(STAGE1, (0.5, 0.5)))
        assert F[0] == pytest.approx(0.7)

    def test_g_m_scaling(self):
        plant = builtin_scenario("example2")[0]
        doubled = replace(plant, g_m=2.0 * plant.g_m)
        args = ([PF, PF], sinusoid_reference(1.0, 1.0), (0.05, 2.0))
        up = upstream_of(STAGE2, (0.5, 0.5))
        base = f_star_from_bounds(plant, *args, tracking_f0_from_majorants(plant), up)
        half = f_star_from_bounds(doubled, *args, tracking_f0_from_majorants(doubled), up)
        assert half == pytest.approx([v / 2 for v in base])

    def test_missing_evaluators(self):
        with pytest.raises(BfppcError):
            f_star_from_bounds(zero_plant(), [PF, PF], constant_reference(0.0), (0.1, 0.1), None)

    def test_negative_bound_rejected(self):
        neg = [lambda a, u: -1.0] * 2
        with pytest.raises(BfppcError):
            f_star_from_bounds(zero_plant(), [PF, PF], constant_reference(0.0), (0.1, 0.1), neg)


class TestSynthesis:
    def test_solved_stage_is_feasible(self):
        plant = builtin_scenario("example2")[0]
        stage, F = synthesize_tracking_stage(
            plant, [PF, PF], sinusoid_reference(1.0, 1.0), (0.05, 2.0), tracking_f0_from_majorants(plant),
            (2.0, 2.0), (6.0, 0.1), (3, 5), (0.5, 0.5), rho_dot_bound=1.0,
        )
        assert stage.k == (2.0, 2.0) and stage.M == (6.0, 0.1)
        res = tracking_residuals(stage.k, stage.M, stage.c, stage.N, (0.5, 0.5), (0.05, 2.0), F)
        assert all(r >= 0 for r in res)


class TestTrace:
    def test_sigma_monotone(self, example2_trace):
        s = example2_trace.sigma
        assert np.all(np.diff(s) >= 0) and s.max() <= 2 and s.min() >= 1

    def test_band_identity(self, example2_trace):
        # wherever |e1| <= p1 the tracking error lies in the shifted band
        tr = example2_trace
        p1 = 0.05
        inside = np.abs(tr.e[:, 0]) <= p1
        err = tr.x[:, 0] - tr.yd
        centre = tr.rho * (0.5 - 0.0)
        assert np.all(np.abs(err[inside] - centre[inside]) <= p1 + 1e-12)
        assert np.all((tr.x[inside, 0] >= tr.env_lo[inside] - 1e-12) & (tr.x[inside, 0] <= tr.env_hi[inside] + 1e-12))

    def test_input_bounded(self, example2_trace):
        assert np.all(np.isfinite(example2_trace.u)) and np.abs(example2_trace.u).max() < 1e3
