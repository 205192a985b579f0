import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsrc.errors import ConfigError, ContractError, InsufficientDataError
from dsrc.forward import build_source_space
from dsrc.matcore import SpdMatrix
from dsrc.statespace import (RecordingBlock, StateModel, build_transition, estimate_obs_noise,
                             estimate_state_noise, init_state)


def small_model(p=4, s=3, seed=0):
    rng = np.random.default_rng(seed)
    return StateModel(H=rng.standard_normal((s, p)), F=np.eye(p),
                      state_noise=SpdMatrix(np.eye(p) * 0.5),
                      obs_noise=SpdMatrix(np.eye(s) * 0.1),
                      init_mean=np.zeros(p), init_cov=SpdMatrix(np.eye(p)))


class TestRecording:
    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            RecordingBlock(np.zeros((3, 1)))

    def test_bad_rate(self):
        with pytest.raises(ContractError):
            RecordingBlock(np.zeros((3, 4)), sample_rate=0)


class TestStateModel:
    def test_dimension_checks(self):
        with pytest.raises(ContractError):
            StateModel(H=np.ones((3, 4)), F=np.eye(3), state_noise=SpdMatrix(np.eye(4)),
                       obs_noise=SpdMatrix(np.eye(3)), init_mean=np.zeros(4),
                       init_cov=SpdMatrix(np.eye(4)))
        with pytest.raises(ContractError):
            StateModel(H=np.ones((3, 4)), F=np.eye(4), state_noise=np.eye(4),
                       obs_noise=SpdMatrix(np.eye(3)), init_mean=np.zeros(4),
                       init_cov=SpdMatrix(np.eye(4)))
        with pytest.raises(ContractError):
            StateModel(H=np.ones((3, 4)), F=np.eye(4), state_noise=SpdMatrix(np.eye(4)),
                       obs_noise=SpdMatrix(np.eye(2)), init_mean=np.zeros(4),
                       init_cov=SpdMatrix(np.eye(4)))

    def test_immutable(self):
        m = small_model()
        with pytest.raises(ValueError):
            m.H[0, 0] = 1.0

    def test_save_load(self, tmp_path):
        m = small_model()
        m.save(tmp_path / "model")
        back = StateModel.load(tmp_path / "model")
        np.testing.assert_array_equal(back.H, m.H)
        np.testing.assert_array_equal(back.state_noise.array, m.state_noise.array)
        np.testing.assert_array_equal(back.init_mean, m.init_mean)


class TestTransition:
    def test_identity(self):
        space = build_source_space(1)
        np.testing.assert_array_equal(build_transition(space), np.eye(42))

    def test_neighbor_rows(self):
        space = build_source_space(1)
        F = build_transition(space, "neighbor", 0.3)
        np.testing.assert_allclose(F.sum(axis=1), 1.3)
        assert np.all(np.diag(F) == 1.0)
        for i, nbrs in enumerate(space.neighbors):
            assert np.count_nonzero(F[i]) == len(nbrs) + 1

    def test_isolated_vertex_identity_row(self):
        F = build_transition([(1,), (0,), ()], "neighbor", 0.5)
        np.testing.assert_array_equal(F[2], [0.0, 0.0, 1.0])

    @pytest.mark.parametrize("beta", [-0.1, 1.0])
    def test_coupling_range(self, beta):
        with pytest.raises(ConfigError):
            build_transition(build_source_space(0), "neighbor", beta)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            build_transition(build_source_space(0), "ar2")


class TestObsNoise:
    def test_recovers_white_noise(self):
        rng = np.random.default_rng(1)
        er = 0.3 * rng.standard_normal((8, 20000))
        est = estimate_obs_noise(er, shrinkage=0.0).array
        np.testing.assert_allclose(np.diag(est), 0.09, rtol=0.05)

    def test_full_shrinkage_isotropic(self):
        rng = np.random.default_rng(2)
        er = rng.standard_normal((5, 50)) * np.arange(1, 6)[:, None]
        est = estimate_obs_noise(er, shrinkage=1.0).array
        iso = np.trace(np.cov(er, ddof=1)) / 5
        np.testing.assert_array_equal(est, iso * np.eye(5))

    def test_matches_numpy_cov(self):
        rng = np.random.default_rng(3)
        er = rng.standard_normal((4, 30))
        np.testing.assert_allclose(estimate_obs_noise(er, 0.0).array, np.cov(er), rtol=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(s=st.integers(2, 12), m=st.integers(2, 15), shrink=st.floats(0.01, 1.0),
           seed=st.integers(0, 10**6))
    def test_shrunk_estimate_is_spd(self, s, m, shrink, seed):
        er = np.random.default_rng(seed).standard_normal((s, m))
        est = estimate_obs_noise(er, shrink)
        assert np.all(np.diag(est.chol) > 0)

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            estimate_obs_noise(np.zeros((3, 1)))

    def test_bad_shrinkage(self):
        with pytest.raises(ConfigError):
            estimate_obs_noise(np.ones((2, 5)) + np.eye(2, 5), shrinkage=1.5)


class TestStateNoise:
    def test_differenced_variance(self):
        rng = np.random.default_rng(4)
        steps = rng.standard_normal((3, 5000)) * np.array([[0.1], [1.0], [2.0]])
        walk = np.cumsum(steps, axis=1)
        est = np.diag(estimate_state_noise(walk).array)
        np.testing.assert_allclose(est, [0.01, 1.0, 4.0], rtol=0.06)

    def test_direct_formula(self):
        x = np.array([[0.0, 1.0, 3.0, 6.0]])  # differences 1, 2, 3
        assert estimate_state_noise(x).array[0, 0] == pytest.approx(1.0)

    def test_floor(self):
        x = np.tile(np.arange(5.0), (2, 1))  # constant differences
        np.testing.assert_array_equal(np.diag(estimate_state_noise(x, floor=1e-6).array),
                                      [1e-6, 1e-6])

    def test_needs_three_steps(self):
        with pytest.raises(InsufficientDataError):
            estimate_state_noise(np.ones((2, 2)))

    def test_init_state(self):
        x = np.arange(12.0).reshape(3, 4)
        sw = estimate_state_noise(x + np.random.default_rng(0).standard_normal((3, 4)))
        mean, cov = init_state(x, sw)
        np.testing.assert_array_equal(mean, [0.0, 4.0, 8.0])
        assert cov is sw
