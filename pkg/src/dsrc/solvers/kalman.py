"""Kalman filter and fixed-interval (Rauch-Tung-Striebel) smoother."""
import logging

import numpy as np

from ..errors import ContractError, NotSpdError, SolverFailure
from ..matcore import gemm_blocked, solve_spd, symmetrize
from ..statespace import recording_data
from .checkpoint import CheckpointStore
from .series import EstimateSeries

log = logging.getLogger(__name__)


def _is_identity(F):
    return F.shape[0] == F.shape[1] and np.array_equal(F, np.eye(F.shape[0]))


def _mv(A, x, workers, transpose=False):
    return gemm_blocked(A, x[:, None], transpose_a=transpose, workers=workers)[:, 0]


def _propagate(F, W, identity, workers):
    """``F W F^T`` without the two products when ``F`` is the identity."""
    if identity:
        return W
    FW = gemm_blocked(F, W, workers=workers)
    return gemm_blocked(FW, F, transpose_b=True, workers=workers)


def _sym(a, step, what):
    try:
        return symmetrize(a)
    except NotSpdError as exc:
        raise SolverFailure(f"{what} not SPD after jitter ({exc})", step) from exc


def kalman_filter(model, Y, store=None, *, workers=None, keep_covariances=False):
    """Forward filtering pass.

    Per step ``k = 1..N``::

        J_{k|k-1} = F J_{k-1|k-1}
        W_{k|k-1} = F W_{k-1|k-1} F^T + Sigma_w
        K_k       = W_{k|k-1} H^T (H W_{k|k-1} H^T + Sigma_e)^-1
        J_{k|k}   = J_{k|k-1} + K_k (Y_k - H J_{k|k-1})
        W_{k|k}   = (I - K_k H) W_{k|k-1}

    The gain is never formed through an explicit inverse: the S x S
    innovation covariance is factored and solved against ``H W_{k|k-1}``.
    Both covariances are symmetrised every step and written to ``store``.

    Parameters
    ----------
    model : StateModel
    Y : RecordingBlock or array_like
        S x N observations.
    store : CheckpointStore or path, optional
        Destination for per-step covariances (needed by :func:`fis_smooth`).
    workers : int, optional
        matcore worker count.
    keep_covariances : bool
        Also return the float64 covariances in memory (small problems only).

    Returns
    -------
    EstimateSeries
        Filtered means. With ``keep_covariances`` the logs additionally carry
        ``"pred_cov"`` and ``"upd_cov"`` lists of arrays.
    """
    y = recording_data(Y)
    H, F = model.H, model.F
    s, p = H.shape
    if y.shape[0] != s:
        raise ContractError(f"recording has {y.shape[0]} channels, model expects {s}")
    n = y.shape[1]
    if store is not None and not isinstance(store, CheckpointStore):
        store = CheckpointStore(store)
    if store is not None:
        store.reset()

    identity = _is_identity(F)
    sigma_w = model.state_noise.array
    sigma_e = model.obs_noise.array
    J = model.init_mean.copy()
    W = model.init_cov.array

    means = np.empty((p, n))
    innov_norms, traces, pred_traces = [], [], []
    pred_covs, upd_covs = [], []
    for i in range(n):
        k = i + 1
        J_pred = J if identity else _mv(F, J, workers)
        W_pred = _propagate(F, W, identity, workers) + sigma_w
        W_pred = 0.5 * (W_pred + W_pred.T)

        HW = gemm_blocked(H, W_pred, workers=workers)                 # S x P
        innov_cov = _sym(gemm_blocked(HW, H, transpose_b=True, workers=workers) + sigma_e,
                         k, "innovation covariance")
        innov = y[:, i] - _mv(H, J_pred, workers)
        gain_t = solve_spd(innov_cov, HW)                              # K_k^T, S x P
        J = J_pred + _mv(gain_t, innov, workers, transpose=True)
        W_upd = _sym(W_pred - gemm_blocked(gain_t, HW, transpose_a=True, workers=workers),
                     k, "updated covariance")
        W = W_upd.array

        means[:, i] = J
        innov_norms.append(float(np.linalg.norm(innov)))
        traces.append(W_upd.trace())
        pred_traces.append(float(np.trace(W_pred)))
        if store is not None:
            store.put(i, W_pred, W)
        if keep_covariances:
            pred_covs.append(W_pred)
            upd_covs.append(W)
        log.debug("kf step %d: |innov|=%.3e tr(W)=%.3e", k, innov_norms[-1], traces[-1])

    if store is not None:
        store.finalize(n)
    logs = {"innovation_norm": innov_norms, "cov_trace": traces, "pred_cov_trace": pred_traces}
    if keep_covariances:
        logs["pred_cov"] = pred_covs
        logs["upd_cov"] = upd_covs
    return EstimateSeries(estimates=means, method="kf", logs=logs)


def fis_smooth(model, filter_out, store, *, workers=None, keep_covariances=False):
    """Backward fixed-interval smoothing pass over a completed filter run.

    Seeded with ``J_{N|N}, W_{N|N}`` from the filter, then for
    ``k = N-1 .. 1``::

        A_k     = W_{k|k} F^T W_{k+1|k}^-1
        J_{k|N} = J_{k|k} + A_k (J_{k+1|N} - F J_{k|k})
        W_{k|N} = W_{k|k} + A_k (W_{k+1|N} - W_{k+1|k}) A_k^T

    ``A_k`` is obtained from the transposed solve
    ``W_{k+1|k} A_k^T = F W_{k|k}``; no inverse is formed. Covariances are
    read back from ``store``, so smoothing sees whatever precision the
    checkpoints were written in.
    """
    if not isinstance(store, CheckpointStore):
        store = CheckpointStore(store)
    Jf = np.asarray(getattr(filter_out, "estimates", filter_out), dtype=float)
    p, n = Jf.shape
    if p != model.n_sources:
        raise ContractError(f"filter output has {p} sources, model has {model.n_sources}")
    manifest = store.verify(n_steps=n, dim=p)

    F = model.F
    identity = _is_identity(F)
    out = np.empty((p, n))
    Ws = store.get("upd", n - 1, manifest)
    Js = Jf[:, n - 1].copy()
    out[:, n - 1] = Js
    smoothed_traces = [0.0] * n
    filtered_traces = [0.0] * n
    smoothed_traces[n - 1] = filtered_traces[n - 1] = float(np.trace(Ws))
    covs = [None] * n
    if keep_covariances:
        covs[n - 1] = Ws

    for i in range(n - 2, -1, -1):
        k = i + 1
        W_upd = store.get("upd", i, manifest)
        W_next_pred = store.get("pred", i + 1, manifest)
        try:
            pred_spd = symmetrize(W_next_pred)
        except NotSpdError as exc:
            raise SolverFailure(f"W_{{k+1|k}} not SPD ({exc})", k) from exc
        FW = W_upd if identity else gemm_blocked(F, W_upd, workers=workers)
        gain = solve_spd(pred_spd, FW).T                               # A_k, P x P
        gain = np.ascontiguousarray(gain)
        J_next_pred = Jf[:, i] if identity else _mv(F, Jf[:, i], workers)
        Js = Jf[:, i] + _mv(gain, Js - J_next_pred, workers)
        delta = Ws - W_next_pred
        correction = gemm_blocked(gemm_blocked(gain, delta, workers=workers), gain,
                                  transpose_b=True, workers=workers)
        Ws = 0.5 * ((W_upd + correction) + (W_upd + correction).T)
        out[:, i] = Js
        smoothed_traces[i] = float(np.trace(Ws))
        filtered_traces[i] = float(np.trace(W_upd))
        if keep_covariances:
            covs[i] = Ws
        log.debug("fis step %d: tr(W_k|N)=%.3e tr(W_k|k)=%.3e", k, smoothed_traces[i],
                  filtered_traces[i])

    logs = {"cov_trace": smoothed_traces, "filtered_cov_trace": filtered_traces}
    if keep_covariances:
        logs["smoothed_cov"] = covs
    return EstimateSeries(estimates=out, method="fis", logs=logs)
