import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from dsrc.errors import ContractError, NumericalError
from dsrc.evaluation import (MseReport, amplitude_ratio, lag_estimate, mse_map, mse_report,
                             peak_vertex, relative_mse_change)
from dsrc.sim import GroundTruth


def truth_of(J, mask=None):
    J = np.array(J, dtype=float)
    if mask is None:
        mask = np.any(J != 0, axis=1)
    return GroundTruth(J_true=J, active_mask=np.asarray(mask, bool),
                       region_ids=np.where(mask, 0, -1), sample_rate=600.0)


def naive_mse(est, ref):
    p, n = len(ref), len(ref[0])
    out = []
    for i in range(p):
        acc = 0.0
        for k in range(n):
            acc += (est[i][k] - ref[i][k]) ** 2
        out.append(acc / n)
    return np.array(out)


def smooth_signal(n, phase=0.0):
    t = np.arange(n) / 600.0
    return np.sin(2 * np.pi * 0.4 * t + phase) * (np.sin(2 * np.pi * 10 * t) +
                                                  np.sin(2 * np.pi * 20 * t))


class TestMse:
    def test_identical_zero(self):
        J = np.random.default_rng(0).standard_normal((5, 7))
        assert np.all(mse_map(J, truth_of(J)) == 0.0)

    def test_zero_estimate_one_vertex(self):
        J = np.zeros((3, 4))
        J[1] = [1.0, -1.0, 1.0, -1.0]
        np.testing.assert_array_equal(mse_map(np.zeros((3, 4)), truth_of(J)), [0.0, 1.0, 0.0])

    def test_matches_naive(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((6, 9)), rng.standard_normal((6, 9))
        np.testing.assert_allclose(mse_map(a, truth_of(b)), naive_mse(a.tolist(), b.tolist()),
                                   rtol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            mse_map(np.zeros((2, 3)), truth_of(np.ones((2, 4))))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(2, 30))
    def test_time_permutation_invariant(self, seed, n):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((4, n)), rng.standard_normal((4, n))
        perm = rng.permutation(n)
        np.testing.assert_allclose(mse_map(a[:, perm], truth_of(b[:, perm])),
                                   mse_map(a, truth_of(b)), rtol=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_report_means(self, seed):
        rng = np.random.default_rng(seed)
        per = rng.uniform(0, 2, 10)
        mask = rng.random(10) < 0.5
        assume(mask.any())
        rep = MseReport.build(per, mask)
        assert np.all(rep.per_vertex_mse >= 0)
        assert rep.mean_all == pytest.approx(np.mean(per), rel=1e-15)
        assert rep.mean_active == pytest.approx(np.mean(per[mask]), rel=1e-15)


class TestRelativeChange:
    def test_self_is_zero(self):
        rep = MseReport.build(np.array([1.0, 2.0, 3.0]), np.array([True, False, True]))
        assert relative_mse_change(rep, rep, "all") == 0.0
        assert relative_mse_change(rep, rep, "active") == 0.0

    def test_half(self):
        base = MseReport.build(np.array([2.0, 4.0]), np.array([True, True]))
        half = MseReport.build(np.array([1.0, 2.0]), np.array([True, True]))
        assert relative_mse_change(half, base, "all") == -50.0

    def test_zero_baseline(self):
        zero = MseReport.build(np.zeros(2), np.array([True, False]))
        with pytest.raises(NumericalError):
            relative_mse_change(zero, zero)

    def test_bad_scope(self):
        rep = MseReport.build(np.ones(2), np.array([True, False]))
        with pytest.raises(ContractError):
            relative_mse_change(rep, rep, "region")

    def test_from_report(self):
        J = np.zeros((2, 4))
        J[0] = 1.0
        rep = mse_report(np.zeros((2, 4)), truth_of(J), "mne")
        assert rep.mean_active == 1.0 and rep.mean_all == 0.5 and rep.method == "mne"


class TestLag:
    def test_identity(self):
        x = smooth_signal(120)
        assert lag_estimate(x[None], truth_of(x[None]), 0) == 0

    @pytest.mark.parametrize("shift", [1, 3, 7])
    def test_right_shift(self, shift):
        x = smooth_signal(160)
        est = np.roll(x, shift)
        est[:shift] = x[0]
        assert lag_estimate(est[None], truth_of(x[None]), 0) == shift

    def test_left_shift(self):
        x = smooth_signal(160)
        est = np.roll(x, -4)
        assert lag_estimate(est[None], truth_of(x[None]), 0) == -4

    def test_needs_16_samples(self):
        x = smooth_signal(15)
        with pytest.raises(ContractError):
            lag_estimate(x[None], truth_of(x[None]), 0)

    def test_zero_variance(self):
        x = smooth_signal(40)
        with pytest.raises(NumericalError):
            lag_estimate(np.zeros((1, 40)), truth_of(x[None]), 0)

    def test_inactive_vertex(self):
        J = np.zeros((2, 40))
        J[0] = smooth_signal(40)
        with pytest.raises(ContractError):
            lag_estimate(J, truth_of(J), 1)

    def test_tie_goes_to_zero(self):
        # a constant-slope ramp correlates perfectly at every shift
        x = np.arange(40.0)
        assert lag_estimate(x[None], truth_of(x[None]), 0) == 0

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(16, 80))
    def test_antisymmetric(self, seed, n):
        rng = np.random.default_rng(seed)
        a = np.cumsum(rng.standard_normal(n))
        b = np.cumsum(rng.standard_normal(n))
        la = lag_estimate(a[None], truth_of(b[None]), 0)
        lb = lag_estimate(b[None], truth_of(a[None]), 0)
        assert la == -lb


class TestPeak:
    def test_argmax_lowest_index(self):
        est = np.array([[0.0, 1.0], [2.0, -3.0], [3.0, 0.0], [0.5, 0.5]])
        assert peak_vertex(est) == 1
        assert peak_vertex(est, np.array([True, False, True, True])) == 2

    def test_amplitude_ratio(self):
        J = np.zeros((1, 4))
        J[0] = [0.0, 1.0, -2.0, 0.5]
        assert amplitude_ratio(2 * J, truth_of(J), 0) == 2.0
