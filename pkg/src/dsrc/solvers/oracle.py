"""Dense joint-posterior reference for small state-space problems.

Stacks every state into one vector and solves the normal equations of the
joint Gaussian (prior from the dynamics, likelihood from the observations)
with plain numpy. The RTS smoother must reproduce this posterior mean; the
code path shares nothing with ``matcore`` on purpose.
"""
import numpy as np

from ..errors import ContractError, SizeGuardError
from ..statespace import recording_data
from .series import EstimateSeries

MAX_JOINT_DIM = 5000


def batch_map_oracle(model, Y, *, return_covariances=False):
    """Joint MAP estimate of ``J_1 .. J_N`` given all observations.

    Prior: ``J_1 ~ N(F J_0, F W_0 F^T + Sigma_w)`` and
    ``J_k | J_{k-1} ~ N(F J_{k-1}, Sigma_w)``. Likelihood:
    ``Y_k | J_k ~ N(H J_k, Sigma_e)``.

    Refuses problems with ``P * N > 5000``.
    """
    y = recording_data(Y)
    H = np.asarray(model.H)
    F = np.asarray(model.F)
    s, p = H.shape
    if y.shape[0] != s:
        raise ContractError(f"recording has {y.shape[0]} channels, model expects {s}")
    n = y.shape[1]
    if p * n > MAX_JOINT_DIM:
        raise SizeGuardError(f"joint dimension {p * n} exceeds {MAX_JOINT_DIM}")

    q_first = F @ model.init_cov.array @ F.T + model.state_noise.array
    q_first_inv = np.linalg.inv(q_first)
    q_inv = np.linalg.inv(model.state_noise.array)
    e_inv = np.linalg.inv(model.obs_noise.array)
    info_obs = H.T @ e_inv @ H

    lam = np.zeros((p * n, p * n))
    eta = np.zeros(p * n)

    def blk(i):
        return slice(i * p, (i + 1) * p)

    lam[blk(0), blk(0)] += q_first_inv
    eta[blk(0)] += q_first_inv @ (F @ model.init_mean)
    for i in range(1, n):
        lam[blk(i), blk(i)] += q_inv
        lam[blk(i - 1), blk(i - 1)] += F.T @ q_inv @ F
        lam[blk(i), blk(i - 1)] -= q_inv @ F
        lam[blk(i - 1), blk(i)] -= F.T @ q_inv
    for i in range(n):
        lam[blk(i), blk(i)] += info_obs
        eta[blk(i)] += H.T @ e_inv @ y[:, i]

    mean = np.linalg.solve(lam, eta).reshape(n, p).T
    logs = {}
    if return_covariances:
        cov = np.linalg.inv(lam)
        logs["posterior_cov"] = [cov[blk(i), blk(i)] for i in range(n)]
    return EstimateSeries(estimates=np.ascontiguousarray(mean), method="batch", logs=logs)
