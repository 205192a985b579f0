"""Static minimum-norm estimate."""
import numpy as np

from ..errors import ContractError
from ..matcore import SpdMatrix, as_dense, gemm_blocked, solve_spd, symmetrize
from ..statespace import recording_data
from .series import EstimateSeries


def _diag(R, p):
    if isinstance(R, SpdMatrix):
        R = R.array
    R = np.asarray(R, dtype=float)
    if R.ndim == 0:
        R = np.full(p, float(R))
    elif R.ndim == 2:
        off = R - np.diag(np.diag(R))
        if np.any(off != 0.0):
            raise ContractError("source prior R must be diagonal")
        R = np.diag(R).copy()
    if R.shape != (p,) or not np.all(R > 0) or not np.all(np.isfinite(R)):
        raise ContractError(f"source prior R must have {p} positive diagonal entries")
    return R


def default_source_prior(H, obs_noise):
    """Isotropic source prior ``r * I`` with ``trace(H r H^T) = trace(obs_noise)``.

    With this scaling ``lam = 1`` balances prior and noise power in sensor
    space.
    """
    H = as_dense(getattr(H, "matrix", H), "H")
    noise = obs_noise.array if isinstance(obs_noise, SpdMatrix) else np.asarray(obs_noise)
    r = np.trace(noise) / np.sum(H * H)
    return np.full(H.shape[1], r)


def mne_solve(H, R, obs_noise, lam, Y, *, workers=None):
    """Minimum-norm estimate ``lam R H^T (lam H R H^T + obs_noise)^-1 Y_k`` per frame.

    The S x S bracket is factored once and reused for every frame, so each
    column of the output depends only on the matching column of ``Y``.

    Parameters
    ----------
    H : array_like or LeadField
        S x P lead field.
    R : array_like or SpdMatrix
        Diagonal source prior, given as a P-vector, scalar or diagonal matrix.
    obs_noise : SpdMatrix or array_like
        S x S observation noise covariance.
    lam : float
        Positive regularization weight.
    Y : RecordingBlock or array_like
        S x N recording.
    """
    H = as_dense(getattr(H, "matrix", H), "H")
    s, p = H.shape
    if not lam > 0:
        raise ContractError(f"lambda must be positive, got {lam}")
    r = _diag(R, p)
    y = recording_data(Y)
    noise = obs_noise if isinstance(obs_noise, SpdMatrix) else SpdMatrix(obs_noise)
    if y.shape[0] != s or noise.dim != s:
        raise ContractError(f"dimension mismatch: H {H.shape}, Y {y.shape}, noise {noise.shape}")

    gain_t = H * (lam * r)  # S x P, equals (lam R H^T)^T
    bracket = gemm_blocked(gain_t, H, transpose_b=True, workers=workers) + noise.array
    bracket = symmetrize(bracket)
    x = solve_spd(bracket, y)
    est = gemm_blocked(gain_t, x, transpose_a=True, workers=workers)
    logs = {"frame_norm": np.linalg.norm(est, axis=0).tolist()}
    return EstimateSeries(estimates=est, method="mne", logs=logs)
