import math
from dataclasses import replace

import numpy as np
import pytest

from bfppc.errors import SynthesisError
from bfppc.plant import builtin_scenario
from bfppc.quantizer import QuantizerModel
from bfppc.regulator import (
    c_upper_bounds,
    check_regulation_feasibility,
    envelope_radii,
    output_envelope,
    regulation_config_from_constants,
    regulation_control,
    regulation_h0_from_majorants,
    synthesize_regulation,
    time_varying_radii,
)
from bfppc.signals import PerformanceFunction

PF = PerformanceFunction.cosine(1.0)
Q = QuantizerModel("uniform", 0.1)


def published(**overrides):
    args = dict(
        n=2,
        gamma=(4.0, 0.4),
        c=(0.1, 1.5),
        N=(3, 3),
        H=(5.0, 10.0),
        eps=(0.05, 0.99),
        c0=0.01,
        quantizer=Q,
        pf=PF,
        x0=(1.0, 0.0),
    )
    args.update(overrides)
    return regulation_config_from_constants(**args)


@pytest.fixture(scope="module")
def synth():
    plant = builtin_scenario("example1")[0]
    return synthesize_regulation(plant, Q, PF, regulation_h0_from_majorants(plant, 2.0), (0.05, 0.99), 0.01, (3, 3))


class TestRadii:
    def test_first_radius(self):
        cfg = published()
        assert cfg.delta_M == pytest.approx(0.1)
        assert cfg.p[0] == pytest.approx(0.15)

    def test_first_mismatch(self):
        cfg = published()
        assert cfg.delta[0] == pytest.approx(2.0 + 0.01)
        assert cfg.p[1] == pytest.approx(2.01 + 0.1 + 0.99)

    def test_recursion_oracle(self):
        # independent loop over the two definitions
        gamma, H, eps, dM, c0 = (3.0, 2.0, 0.5), (1.5, 4.0, 2.0), (0.1, 0.2, 0.3), 0.02, 0.05
        p, d = envelope_radii(gamma, H, eps, dM, c0)
        d_prev = 0.0
        for i in range(3):
            assert p[i] == pytest.approx((d_prev if i else 0.0) + dM + eps[i])
            d_prev = gamma[i] * H[i] * (dM + d_prev) + c0
            assert d[i] == pytest.approx(d_prev)

    def test_c_upper_bound(self):
        cfg = published()
        ub = c_upper_bounds(cfg.N, cfg.p, cfg.delta, cfg.delta_M, cfg.c0)
        assert ub[0] == pytest.approx(0.01 / 0.0255)

    def test_time_varying_radii_shrink(self):
        cfg = published()
        assert time_varying_radii(cfg, 0.0) == pytest.approx(list(cfg.p))
        late = time_varying_radii(cfg, 10.0)
        assert late[0] == pytest.approx(0.05 + 0.05)
        assert all(a <= b for a, b in zip(late, cfg.p))


class TestControl:
    def test_zero_at_start(self):
        e, alpha, u = regulation_control(published(), [1.0, 0.0], 0.0)
        assert e == [0.0, 0.0] and u == 0.0

    def test_stage_one(self):
        e, alpha, _ = regulation_control(published(), [1.1, 0.0], 0.0)
        assert e[0] == pytest.approx(0.1)
        assert alpha[0] == pytest.approx(-2.0001, abs=1e-12)

    def test_stage_two(self):
        e, alpha, u = regulation_control(published(), [1.1, -2.0], 0.0)
        assert e[1] == pytest.approx(1e-4, abs=1e-12)
        assert u == pytest.approx(-4e-4 - 1.5e-12, abs=1e-13)

    def test_odd_symmetry(self):
        cfg = published(x0=(0.0, 0.0))
        rng = np.random.default_rng(4)
        for q in rng.uniform(-3, 3, size=(100, 2)).tolist():
            _, a1, u1 = regulation_control(cfg, q, 0.5)
            _, a2, u2 = regulation_control(cfg, [-v for v in q], 0.5)
            assert a2 == pytest.approx([-v for v in a1]) and u2 == pytest.approx(-u1)

    @pytest.mark.parametrize("scale", [1e2, 1e4, 1e6])
    def test_finite_everywhere(self, scale):
        _, _, u = regulation_control(published(), [scale, -scale], 0.3)
        assert math.isfinite(u)

    def test_dimension(self):
        with pytest.raises(ValueError):
            regulation_control(published(), [1.0], 0.0)


class TestFeasibility:
    def test_published_gains(self):
        report = check_regulation_feasibility(published(H0_evals=regulation_h0_from_majorants(builtin_scenario("example1")[0], 2.0)))
        failed = {it.name for it in report.failures()}
        assert not report.passed
        assert any(name.startswith("line 3") for name in failed)

    def test_synthesized_passes(self, synth):
        report = check_regulation_feasibility(synth)
        assert report.passed
        assert all(it.residual >= 0 for it in report.items)

    def test_zero_gamma_fails_line_three(self, synth):
        bad = replace(synth, gamma=(0.0, synth.gamma[1]))
        names = {it.name for it in check_regulation_feasibility(bad).failures()}
        assert "line 3: gamma[1] lower bound" in names

    def test_large_c_fails_line_one(self, synth):
        ub = c_upper_bounds(synth.N, synth.p, synth.delta, synth.delta_M, synth.c0)
        bad = replace(synth, c=(10 * ub[0], synth.c[1]))
        names = {it.name for it in check_regulation_feasibility(bad).failures()}
        assert "line 1: c[1] upper bound" in names

    def test_report_dict(self, synth):
        d = check_regulation_feasibility(synth).to_dict()
        assert d["pass"] is True and len(d["items"]) >= 4


class TestSynthesis:
    def test_radius_and_c(self, synth):
        assert synth.p[0] == pytest.approx(0.15)
        assert synth.c[0] == pytest.approx(0.01 / 0.0255)

    def test_gamma_margin(self, synth):
        # gamma is 1.05 times the bound, so the relative gap is 0.05/1.05
        for it in check_regulation_feasibility(synth).items:
            if it.name.startswith("line 3") or it.name.startswith("line 4"):
                idx = int(it.name.split("[")[1][0]) - 1
                lb = synth.gamma[idx] - it.residual
                assert synth.gamma[idx] == pytest.approx(1.05 * lb)

    def test_nonpositive_bound_rejected(self):
        plant = builtin_scenario("example1")[0]
        zero = [lambda args, up: 0.0] * 2
        with pytest.raises(SynthesisError, match="H\\*"):
            synthesize_regulation(plant, Q, PF, zero, (0.05, 0.5), 0.01, (3, 3))

    def test_bad_inputs(self):
        plant = builtin_scenario("example1")[0]
        h0 = regulation_h0_from_majorants(plant)
        with pytest.raises(SynthesisError):
            synthesize_regulation(plant, Q, PF, h0, (0.0, 0.5), 0.01, (3, 3))
        with pytest.raises(SynthesisError):
            synthesize_regulation(plant, Q, PF, h0[:1], (0.05, 0.5), 0.01, (3, 3))

    def test_even_power_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            published(N=(3, 4))


class TestEnvelope:
    def test_start(self):
        assert output_envelope(published(), 1.0, 0.0) == pytest.approx((0.85, 1.15))

    @pytest.mark.parametrize("t", [math.pi, 5.0, 100.0])
    def test_settled(self, t):
        assert output_envelope(published(), 1.0, t) == pytest.approx((-0.15, 0.15))

    def test_degenerate_limit(self):
        q = QuantizerModel("uniform", 1e-12)
        cfg = published(quantizer=q, eps=(1e-12, 0.5), x0=(0.7, 0.0))
        lo, hi = output_envelope(cfg, 0.7, 1.0)
        assert lo == pytest.approx(0.7 * PF(1.0), abs=1e-9) and hi == pytest.approx(lo, abs=1e-9)


class TestMismatch:
    def test_mismatch_bound_sampled(self, synth):
        # |alpha(e_q) - alpha(e)| <= delta_i whenever |e| <= p_i and |e_q - e| <= delta_M + delta_{i-1}
        rng = np.random.default_rng(11)
        for i in range(synth.n):
            g, H, c, N = synth.gamma[i], synth.H[i], synth.c[i], synth.N[i]
            shift = synth.delta_M + (synth.delta[i - 1] if i else 0.0)
            e = rng.uniform(-synth.p[i], synth.p[i], 10_000)
            eq = e + rng.uniform(-shift, shift, 10_000)
            gap = np.abs((-g * H * eq - c * eq**N) - (-g * H * e - c * e**N))
            assert gap.max() <= synth.delta[i] * (1 + 1e-12)

    def test_control_consistency(self, synth):
        # the sampled law agrees with regulation_control at rho = 0
        rng = np.random.default_rng(12)
        for q in rng.uniform(-1, 1, size=(50, 2)).tolist():
            e, alpha, u = regulation_control(synth, q, 10.0)
            a1 = -synth.gamma[0] * synth.H[0] * q[0] - synth.c[0] * q[0] ** 3
            assert alpha[0] == pytest.approx(a1)
            assert e[1] == pytest.approx(q[1] - a1)
