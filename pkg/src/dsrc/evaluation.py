"""Comparison metrics: per-vertex MSE, relative MSE change, temporal lag."""
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericalError


@dataclass(frozen=True, eq=False)
class MseReport:
    """Per-vertex MSE and its spatial means over all and over active vertices."""

    per_vertex_mse: np.ndarray
    mean_all: float
    mean_active: float
    method: str = ""

    @classmethod
    def build(cls, per_vertex, active_mask, method=""):
        per_vertex = np.asarray(per_vertex, dtype=float)
        mask = np.asarray(active_mask, dtype=bool)
        if mask.shape != per_vertex.shape:
            raise ContractError("active mask does not match the MSE vector")
        active = float(np.mean(per_vertex[mask])) if mask.any() else float("nan")
        return cls(per_vertex, float(np.mean(per_vertex)), active, method)

    def mean(self, scope):
        if scope == "all":
            return self.mean_all
        if scope == "active":
            return self.mean_active
        raise ContractError(f"scope must be 'all' or 'active', got {scope!r}")


def _estimates(x):
    return np.asarray(getattr(x, "estimates", x), dtype=float)


def _truth(x):
    return np.asarray(getattr(x, "J_true", x), dtype=float)


def mse_map(estimate, truth):
    """Mean over time of the squared error at every vertex."""
    est = _estimates(estimate)
    ref = _truth(truth)
    if est.shape != ref.shape:
        raise ContractError(f"estimate {est.shape} and truth {ref.shape} differ in shape")
    diff = est - ref
    return np.mean(diff * diff, axis=1)


def mse_report(estimate, truth, method=""):
    return MseReport.build(mse_map(estimate, truth), truth.active_mask, method)


def relative_mse_change(report, baseline, scope="active"):
    """Percentage change of ``report``'s mean MSE against ``baseline``'s."""
    if report.per_vertex_mse.shape != baseline.per_vertex_mse.shape:
        raise ContractError("reports come from different geometries")
    base = baseline.mean(scope)
    if base == 0.0 or not np.isfinite(base):
        raise NumericalError(f"baseline mean MSE is {base}; relative change undefined")
    return 100.0 * (report.mean(scope) - base) / base


def _pearson(x, y):
    x = x - x.mean()
    y = y - y.mean()
    denom = np.sqrt(np.dot(x, x) * np.dot(y, y))
    return np.dot(x, y) / denom if denom > 0 else np.nan


def lag_estimate(estimate, truth, vertex, max_shift=None):
    """Shift (samples) that best aligns the estimate with the truth at ``vertex``.

    A positive lag means the estimate trails the truth. The search covers
    ``[-N/4, N/4]``; correlation is Pearson over the overlapping samples, and
    ties go to the shift nearest zero.
    """
    est = _estimates(estimate)
    ref = _truth(truth)
    mask = getattr(truth, "active_mask", None)
    if mask is not None and not mask[vertex]:
        raise ContractError(f"vertex {vertex} is not active")
    x = est[vertex]
    y = ref[vertex]
    n = x.size
    if n < 16:
        raise ContractError(f"lag estimation needs at least 16 samples, got {n}")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise NumericalError("zero-variance series; correlation undefined")
    window = n // 4 if max_shift is None else int(max_shift)
    best_lag, best = 0, -np.inf
    for lag in sorted(range(-window, window + 1), key=lambda s: (abs(s), -s)):
        if lag >= 0:
            c = _pearson(x[lag:], y[: n - lag])
        else:
            c = _pearson(x[: n + lag], y[-lag:])
        if c > best:
            best_lag, best = lag, c
    return best_lag


def peak_vertex(mne_estimate, active_mask=None):
    """Vertex with the largest peak absolute MNE response, lowest index on ties.

    Restricted to ``active_mask`` when given.
    """
    est = _estimates(mne_estimate)
    peak = np.max(np.abs(est), axis=1)
    if active_mask is not None:
        peak = np.where(np.asarray(active_mask, dtype=bool), peak, -np.inf)
    return int(np.argmax(peak))


def amplitude_ratio(estimate, truth, vertex):
    """Peak absolute estimate over peak absolute truth at one vertex."""
    est = _estimates(estimate)[vertex]
    ref = _truth(truth)[vertex]
    top = np.max(np.abs(ref))
    return float(np.max(np.abs(est)) / top) if top > 0 else float("nan")
