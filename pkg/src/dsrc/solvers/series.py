"""Estimate series returned by every solver."""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError
from ..matcore import as_dense
from ..matcore.io import read_matrix, write_matrix

METHODS = ("mne", "kf", "fis", "batch")


@dataclass(frozen=True, eq=False)
class EstimateSeries:
    """P x N source estimates with per-step diagnostics.

    ``logs`` maps a diagnostic name (``innovation_norm``, ``cov_trace`` ...)
    to a list with one entry per time step.
    """

    estimates: np.ndarray
    method: str
    logs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"unknown method tag {self.method!r}")
        est = as_dense(self.estimates, "estimates")
        est.flags.writeable = False
        object.__setattr__(self, "estimates", est)

    @property
    def n_sources(self):
        return self.estimates.shape[0]

    @property
    def n_steps(self):
        return self.estimates.shape[1]

    def save(self, path):
        """Write ``<path>`` (DSMX) and ``<path>.json``; returns the DSMX digest."""
        path = Path(path)
        digest = write_matrix(path, self.estimates)
        meta = {"kind": "EstimateSeries", "method": self.method,
                "shape": list(self.estimates.shape), "sha256": digest,
                "logs": {k: [float(v) for v in vals] for k, vals in self.logs.items()
                         if all(np.ndim(v) == 0 for v in vals)}}
        path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=1))
        return digest

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(path.with_name(path.name + ".json").read_text())
        est = read_matrix(path, sha256=meta["sha256"])
        return cls(estimates=est, method=meta["method"], logs=meta.get("logs", {}))
