import numpy as np
import pytest

from conftest import B_STAR, R_DET
from mmdiv.barriers import (BarrierNotAdmissibleError,
                            MixingIndeterminateError, RhoEstimate,
                            check_xi_membership, density_crosscheck,
                            estimate_rho, estimate_varrho_p,
                            mixing_probability)


def rho(value, se=0.0):
    return RhoEstimate(value, se, 1000, 100, 0.0)


class TestEstimateRho:
    def test_drift_up_zero_barrier(self, spec_up, unit_clock):
        r1 = estimate_rho(spec_up, unit_clock, np.zeros(1), 0, 1,
                          n_paths=500, dt=0.005)
        assert r1.value == pytest.approx(R_DET, abs=1e-6)
        assert r1.se == pytest.approx(0.0, abs=1e-12)
        assert r1.truncated_share == 0.0
        r2 = estimate_rho(spec_up, unit_clock, np.zeros(1), 0, 2,
                          n_paths=500, dt=0.005)
        assert r2.value == pytest.approx(1.5, abs=1e-12)

    def test_drift_down_at_root(self, spec_down, unit_clock):
        b = np.array([B_STAR])
        for variant in (1, 2):
            r = estimate_rho(spec_down, unit_clock, b, 0, variant,
                             n_paths=200, dt=0.002)
            assert r.value == pytest.approx(1.0, abs=1.5 * 0.1 * 0.002 + 1e-9)

    def test_drift_down_zero_barrier(self, spec_down, unit_clock):
        for variant in (1, 2):
            r = estimate_rho(spec_down, unit_clock, np.zeros(1), 0, variant,
                             n_paths=200, dt=0.002)
            # immediate (0+) passage below the start level either way
            assert r.value == pytest.approx(1.5, abs=1e-3)

    def test_invalid_variant(self, spec_up, unit_clock):
        with pytest.raises(ValueError):
            estimate_rho(spec_up, unit_clock, np.zeros(1), 0, 3, n_paths=10)

    def test_rho_bounded_by_beta(self, spec_two, exp_clock):
        for variant in (1, 2):
            r = estimate_rho(spec_two, exp_clock, np.array([1.0, 1.0]), 0,
                             variant, n_paths=2000, dt=0.01, seed=3)
            assert -1e-9 <= r.value <= spec_two.beta + 3 * r.se

    def test_truncation_warning(self, spec_zero, unit_clock):
        # frozen surplus on a positive barrier: the strict epoch condition
        # X > b never triggers and X never reaches 0
        r = estimate_rho(spec_zero, unit_clock, np.array([1.0]), 0, 2,
                         n_paths=50, dt=0.01, max_epochs=5)
        assert r.truncated_share == 1.0 and r.warn
        assert r.value == 0.0


class TestMembership:
    def test_drift_down_above_band_fails(self, spec_down, unit_clock):
        v = check_xi_membership(spec_down, unit_clock, np.array([3.0]),
                                n_paths=200, dt=0.002)
        assert v.xi_member == "no"
        assert v.entries[0].rho2.value == pytest.approx(1.5 * np.exp(-0.6),
                                                        abs=1e-3)

    def test_drift_down_below_band_fails(self, spec_down, unit_clock):
        v = check_xi_membership(spec_down, unit_clock, np.array([1.0]),
                                n_paths=200, dt=0.002)
        assert v.xi_member == "no"
        assert v.entries[0].rho1.value == pytest.approx(1.5 * np.exp(-0.2),
                                                        abs=1e-3)
        assert v.entries[0].detail.startswith("rho_1")

    def test_zero_model_zero_barrier_passes(self, spec_zero, unit_clock):
        v = check_xi_membership(spec_zero, unit_clock, np.zeros(1),
                                n_paths=100, dt=0.01)
        assert v.xi_member == "yes"
        assert v.entries[0].rho1.value == pytest.approx(R_DET, abs=1e-9)
        assert v.entries[0].rho2.value == pytest.approx(1.5, abs=1e-12)

    def test_all_states_reported(self, spec_two, exp_clock):
        v = check_xi_membership(spec_two, exp_clock, np.array([0.5, 0.5]),
                                n_paths=500, dt=0.01)
        assert len(v.entries) == 2
        assert all(e.reachable for e in v.entries)
        assert v.hat_xi_member in ("yes", "no", "inconclusive")


class TestMixingProbability:
    def test_drift_up_arithmetic(self):
        p = mixing_probability(rho(R_DET), rho(1.5))
        assert p == pytest.approx((1 - R_DET) / (1.5 - R_DET), abs=1e-12)
        assert p == pytest.approx(0.159893, abs=1e-6)

    def test_degenerate_at_one_infimum(self):
        assert mixing_probability(rho(1.0), rho(1.0)) == 0.0

    def test_zero_numerator(self):
        assert mixing_probability(rho(1.0), rho(1.4)) == 0.0

    def test_not_admissible_raises(self):
        with pytest.raises(BarrierNotAdmissibleError):
            mixing_probability(rho(1.2), rho(1.5))
        with pytest.raises(BarrierNotAdmissibleError):
            mixing_probability(rho(0.9), rho(0.95))

    def test_degenerate_away_from_one_raises(self):
        # bracketing holds within noise but the near-equal functionals sit
        # too far from 1 for the mixture equation to have a solution
        with pytest.raises(MixingIndeterminateError):
            mixing_probability(rho(0.93, 0.0), rho(0.94, 0.021))

    def test_clamped_to_unit_interval(self):
        assert 0.0 <= mixing_probability(rho(0.2), rho(1.01)) <= 1.0


class TestVarrho:
    def test_drift_down_deterministic_stop(self, spec_down, unit_clock):
        # from b*, the surplus hits 0 at t = 2 b* and beta e^{-q 2 b*} = 1
        est = estimate_varrho_p(spec_down, unit_clock, np.array([B_STAR]),
                                np.array([0.0]), 0, n_paths=100, dt=0.002)
        assert est.value == pytest.approx(1.0, abs=1.5 * 0.1 * 0.002 + 1e-9)
        assert est.truncated_share == 0.0

    def test_drift_up_never_accepting_flags_horizon(self, spec_up,
                                                    unit_clock):
        # accept probability 0: payouts return the surplus to 0 at every
        # epoch but the stop is never accepted and no injection ever occurs
        est = estimate_varrho_p(spec_up, unit_clock, np.zeros(1),
                                np.array([0.0]), 0, n_paths=50, dt=0.01,
                                max_epochs=30)
        assert est.value == 0.0
        assert est.truncated_share == 1.0 and est.warn

    def test_drift_up_always_accepting_stops_at_start(self, spec_up,
                                                      unit_clock):
        est = estimate_varrho_p(spec_up, unit_clock, np.zeros(1),
                                np.array([1.0]), 0, n_paths=50, dt=0.01)
        assert est.value == pytest.approx(1.5, abs=1e-12)

    def test_drift_up_mixing_identity(self, spec_up, unit_clock):
        # with p from the mixing equation the functional equals 1
        r1 = estimate_rho(spec_up, unit_clock, np.zeros(1), 0, 1, n_paths=200,
                          dt=0.005)
        r2 = estimate_rho(spec_up, unit_clock, np.zeros(1), 0, 2, n_paths=200,
                          dt=0.005)
        p = mixing_probability(r1, r2)
        est = estimate_varrho_p(spec_up, unit_clock, np.zeros(1),
                                np.array([p]), 0, n_paths=4000, dt=0.005,
                                seed=12)
        assert est.value == pytest.approx(1.0, abs=3 * est.se + 5e-3)

    def test_from_x_stops_on_injection_before_regime(self, spec_down,
                                                     unit_clock):
        # starting below the barrier, the drift-down path injects at t = 2x
        est = estimate_varrho_p(spec_down, unit_clock, np.array([B_STAR]),
                                np.array([0.5]), 0, x0=1.0, n_paths=50,
                                dt=0.002)
        expect = 1.5 * np.exp(-0.1 * 2.0)
        assert est.value == pytest.approx(expect, abs=1e-3)


class TestDensityCrosscheck:
    def test_drift_up_slope(self, spec_up, unit_clock):
        out = density_crosscheck(spec_up, unit_clock, np.zeros(1),
                                 np.array([0.159893]), 0, x0=1.0, h=0.05,
                                 n_paths=2000, dt=0.005, seed=4)
        # V has slope e^{-0.1} everywhere for the drift-up model
        assert out["finite_difference"] == pytest.approx(R_DET, abs=5e-3)
        assert out["rho_p"] == pytest.approx(R_DET, abs=3 * out["rho_p_se"]
                                             + 5e-3)
        assert abs(out["gap"]) <= 3 * (out["fd_se"] + out["rho_p_se"]) + 0.01
