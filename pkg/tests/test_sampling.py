import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmdiv.model import DividendClock, JumpLaw, ModelSpec, Regime
from mmdiv.sampling import (default_dt, evaluate_injection_functional,
                            first_passage_scan, sample_epoch_bundle,
                            sample_segment)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestSampleSegment:
    def test_rejects_bad_steps(self, spec_up):
        with pytest.raises(ValueError):
            sample_segment(spec_up, 0, 1.0, 0.0, rng())
        with pytest.raises(ValueError):
            sample_segment(spec_up, 0, 0.0, 0.01, rng())

    def test_deterministic_drift_exact(self, spec_down):
        seg = sample_segment(spec_down, 0, 2.0, 0.01, rng())
        assert seg.xi_end == pytest.approx(-1.0, abs=1e-12)
        assert seg.qint[-1] == pytest.approx(0.2, abs=1e-12)
        # every grid point is a fresh running minimum for monotone decrease
        assert seg.rec_m[0] == 0.0
        assert np.all(np.diff(seg.rec_m) < 0)
        assert np.all(np.diff(seg.rec_t) > 0)

    def test_records_strictly_decreasing(self, spec_two):
        for k in range(20):
            seg = sample_segment(spec_two, k % 2, 1.5, 0.01, rng(k))
            assert seg.rec_m[0] == 0.0
            assert np.all(np.diff(seg.rec_m) < 0)
            assert np.all(np.diff(seg.rec_t) > 0)
            assert np.all(np.diff(seg.rec_qint) >= 0)
            assert seg.rec_m[-1] == pytest.approx(seg.xi.min())

    def test_discount_integral_monotone(self, spec_two):
        seg = sample_segment(spec_two, 0, 1.0, 0.01, rng(5))
        assert np.all(np.diff(seg.qint) >= 0)
        q = np.asarray(spec_two.discount)
        assert q.min() - 1e-9 <= seg.qint[-1] <= q.max() + 1e-9

    def test_jumps_land_at_exact_times(self):
        spec = ModelSpec(("j",), [[0.0]],
                         (Regime(0.0, 0.0, 5.0, JumpLaw("constant", value=-0.5)),),
                         [0.1], 1.5)
        seg = sample_segment(spec, 0, 1.0, 0.01, rng(2))
        # xi is a step function of -0.5 jumps only
        steps = np.diff(seg.xi)
        nonzero = steps[np.abs(steps) > 1e-15]
        np.testing.assert_allclose(nonzero, -0.5)


class TestInjectionFunctional:
    def test_rejects_negative_start(self, spec_down, unit_clock):
        seg = sample_segment(spec_down, 0, 1.0, 0.01, rng())
        with pytest.raises(ValueError):
            evaluate_injection_functional(seg, -0.5)

    def test_drift_down_closed_form(self, spec_down):
        # From x, injections start at t = 2x and accrue at rate 0.5:
        # discounted injection = int_{2x}^{T} 0.5 e^{-0.1 t} dt.
        seg = sample_segment(spec_down, 0, 4.0, 0.001, rng())
        for x in (0.0, 0.5, 1.0):
            inj, endpoint, disc = evaluate_injection_functional(seg, x)
            t0 = 2.0 * x
            exact = 0.5 / 0.1 * (np.exp(-0.1 * t0) - np.exp(-0.1 * 4.0))
            assert inj == pytest.approx(exact, rel=2e-3)
            assert endpoint == pytest.approx(0.0, abs=1e-9)
            assert disc == pytest.approx(np.exp(-0.4), abs=1e-12)

    def test_brute_force_agreement(self, spec_two):
        # Recompute the Skorokhod quantities from the dense path.
        for k in range(10):
            seg = sample_segment(spec_two, 0, 1.0, 0.01, rng(100 + k))
            for x in (0.0, 0.3, 1.7):
                inj, endpoint, disc = evaluate_injection_functional(seg, x)
                runmin = np.minimum.accumulate(seg.xi)
                deficit = np.maximum(-x - runmin, 0.0)
                d_inc = np.diff(np.concatenate(([0.0], deficit)))
                inj_ref = float(np.sum(np.exp(-seg.qint) * np.maximum(d_inc, 0)))
                end_ref = x + seg.xi[-1] + deficit[-1]
                assert inj == pytest.approx(inj_ref, abs=1e-10)
                assert endpoint == pytest.approx(end_ref, abs=1e-10)

    @given(st.integers(0, 30), st.floats(0.0, 3.0), st.floats(0.001, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_injection_lipschitz_in_x(self, seed, x, dx):
        spec = ModelSpec(("a",), [[0.0]], (Regime(-0.3, 0.8),), [0.1], 1.5)
        seg = sample_segment(spec, 0, 1.0, 0.02, rng(seed))
        i1, e1, _ = evaluate_injection_functional(seg, x)
        i2, e2, _ = evaluate_injection_functional(seg, x + dx)
        # more initial capital: weakly less injection, 1-Lipschitz
        assert i2 <= i1 + 1e-12
        assert i1 - i2 <= dx + 1e-12
        # reflected endpoint is nondecreasing and 1-Lipschitz in x
        assert -1e-12 <= e2 - e1 <= dx + 1e-12


class TestFirstPassage:
    def test_strict_vs_weak_at_zero(self, spec_down):
        seg = sample_segment(spec_down, 0, 2.0, 0.01, rng())
        weak = first_passage_scan(seg, 0.0, 0.0, "below-weak")
        assert weak is not None and weak[0] == 0.0 and weak[1] == 1.0
        strict = first_passage_scan(seg, 0.0, 0.0, "below-strict")
        assert strict is not None and strict[0] > 0.0

    def test_no_crossing_returns_none(self, spec_up):
        seg = sample_segment(spec_up, 0, 1.0, 0.01, rng())
        assert first_passage_scan(seg, 1.0, 0.0) is None

    def test_crossing_time_drift(self, spec_down):
        seg = sample_segment(spec_down, 0, 4.0, 0.001, rng())
        t, disc = first_passage_scan(seg, 1.0, 0.0, "below-strict")
        assert t == pytest.approx(2.0, abs=0.01)
        assert disc == pytest.approx(np.exp(-0.1 * t), abs=1e-12)

    def test_unknown_mode(self, spec_down):
        seg = sample_segment(spec_down, 0, 1.0, 0.01, rng())
        with pytest.raises(ValueError):
            first_passage_scan(seg, 0.0, 0.0, "above")


class TestEpochBundle:
    def test_shapes_and_determinism(self, spec_two, exp_clock):
        b1 = sample_epoch_bundle(spec_two, exp_clock, 0, 50, dt=0.01, seed=4)
        b2 = sample_epoch_bundle(spec_two, exp_clock, 0, 50, dt=0.01, seed=4)
        assert b1.n_paths == 50
        assert b1.offsets.size == 51
        np.testing.assert_array_equal(b1.rec_m, b2.rec_m)
        np.testing.assert_array_equal(b1.xi_end, b2.xi_end)
        np.testing.assert_array_equal(b1.clock_draws, b2.clock_draws)

    def test_seed_changes_draws(self, spec_two, exp_clock):
        b1 = sample_epoch_bundle(spec_two, exp_clock, 0, 50, dt=0.01, seed=4)
        b2 = sample_epoch_bundle(spec_two, exp_clock, 0, 50, dt=0.01, seed=5)
        assert not np.array_equal(b1.xi_end, b2.xi_end)

    def test_path_order_independent_streams(self, spec_two, exp_clock):
        # each path has its own seeded stream: a larger bundle extends a
        # smaller one without perturbing the shared prefix
        small = sample_epoch_bundle(spec_two, exp_clock, 1, 20, dt=0.01, seed=9)
        big = sample_epoch_bundle(spec_two, exp_clock, 1, 40, dt=0.01, seed=9)
        np.testing.assert_array_equal(small.xi_end, big.xi_end[:20])
        np.testing.assert_array_equal(small.disc_end, big.disc_end[:20])
        np.testing.assert_array_equal(
            small.rec_m, big.rec_m[:small.rec_m.size])

    def test_keep_paths(self, spec_two, exp_clock):
        b = sample_epoch_bundle(spec_two, exp_clock, 0, 5, dt=0.01, seed=1,
                                keep_paths=True)
        assert b.segments is not None and len(b.segments) == 5
        assert b.segments[0].disc_end == b.disc_end[0]

    def test_default_dt(self, unit_clock, exp_clock):
        assert default_dt(unit_clock) == pytest.approx(1.0 / 200)
        assert default_dt(exp_clock) == pytest.approx(0.5 / 200)
