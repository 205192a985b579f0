"""Inverse solvers: MNE, Kalman filter, RTS smoother and a batch oracle."""
from .checkpoint import CheckpointStore
from .kalman import fis_smooth, kalman_filter
from .mne import default_source_prior, mne_solve
from .oracle import batch_map_oracle
from .series import EstimateSeries

__all__ = [
    "CheckpointStore",
    "EstimateSeries",
    "batch_map_oracle",
    "default_source_prior",
    "fis_smooth",
    "kalman_filter",
    "mne_solve",
]
