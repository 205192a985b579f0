"""State-space model assembly: transition, noise covariances, initial state."""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, InsufficientDataError
from .matcore import SpdMatrix, as_dense
from .matcore.io import read_matrix, write_matrix


@dataclass(frozen=True, eq=False)
class RecordingBlock:
    """Sensor readings, one column per time step."""

    data: np.ndarray
    sample_rate: float = 600.0

    def __post_init__(self):
        data = as_dense(self.data, "recording")
        if data.shape[1] < 2:
            raise InsufficientDataError(f"recording needs at least 2 samples, got {data.shape[1]}")
        if not self.sample_rate > 0:
            raise ContractError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "data", data)

    @property
    def n_sensors(self):
        return self.data.shape[0]

    @property
    def n_steps(self):
        return self.data.shape[1]


def recording_data(y):
    """The S x N array behind a RecordingBlock or a plain array."""
    return as_dense(getattr(y, "data", y), "recording")


def series_data(series):
    """The P x N array behind an EstimateSeries or a plain array."""
    return as_dense(getattr(series, "estimates", series), "estimate series")


@dataclass(frozen=True, eq=False)
class StateModel:
    """Linear-Gaussian state-space model ``J_k = F J_{k-1} + v_k``, ``Y_k = H J_k + e_k``."""

    H: np.ndarray
    F: np.ndarray
    state_noise: SpdMatrix
    obs_noise: SpdMatrix
    init_mean: np.ndarray
    init_cov: SpdMatrix

    def __post_init__(self):
        H = as_dense(getattr(self.H, "matrix", self.H), "H")
        F = as_dense(self.F, "F")
        s, p = H.shape
        mean = np.ascontiguousarray(self.init_mean, dtype=float).reshape(-1)
        if F.shape != (p, p):
            raise ContractError(f"F has shape {F.shape}, expected {(p, p)}")
        for name, cov, dim in (("state_noise", self.state_noise, p),
                               ("obs_noise", self.obs_noise, s),
                               ("init_cov", self.init_cov, p)):
            if not isinstance(cov, SpdMatrix):
                raise ContractError(f"{name} must be an SpdMatrix")
            if cov.dim != dim:
                raise ContractError(f"{name} has dimension {cov.dim}, expected {dim}")
        if mean.shape != (p,) or not np.all(np.isfinite(mean)):
            raise ContractError(f"init_mean must be a finite vector of length {p}")
        H.flags.writeable = False
        F.flags.writeable = False
        mean.flags.writeable = False
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "init_mean", mean)

    @property
    def n_sources(self):
        return self.H.shape[1]

    @property
    def n_sensors(self):
        return self.H.shape[0]

    def save(self, directory):
        """Write each member as a DSMX file plus ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        members = {
            "H": self.H,
            "F": self.F,
            "state_noise": self.state_noise.array,
            "obs_noise": self.obs_noise.array,
            "init_mean": self.init_mean[:, None],
            "init_cov": self.init_cov.array,
        }
        manifest = {"kind": "StateModel", "members": {}}
        for name, arr in members.items():
            fname = f"{name}.dsmx"
            digest = write_matrix(directory / fname, arr)
            manifest["members"][name] = {"file": fname, "shape": list(arr.shape),
                                         "sha256": digest}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        arrs = {name: read_matrix(directory / m["file"], sha256=m["sha256"])
                for name, m in manifest["members"].items()}
        return cls(H=arrs["H"], F=arrs["F"],
                   state_noise=SpdMatrix(arrs["state_noise"]),
                   obs_noise=SpdMatrix(arrs["obs_noise"]),
                   init_mean=arrs["init_mean"][:, 0],
                   init_cov=SpdMatrix(arrs["init_cov"]))


def build_transition(space, kind="identity", coupling=0.0):
    """Transition matrix over the source space.

    ``identity`` gives a random walk. ``neighbor`` gives
    ``I + coupling * D^-1 A`` with ``A`` the mesh adjacency and ``D`` the
    neighbour counts, so each source is pulled towards the mean of its
    neighbours. Isolated vertices get an identity row.
    """
    if not 0.0 <= coupling < 1.0:
        raise ConfigError(f"coupling must be in [0, 1), got {coupling}", field="coupling")
    neighbors = space.neighbors if hasattr(space, "neighbors") else space
    p = len(neighbors)
    F = np.eye(p)
    if kind == "identity":
        return F
    if kind != "neighbor":
        raise ConfigError(f"transition kind must be 'identity' or 'neighbor', got {kind!r}",
                          field="transition")
    if not any(len(n) for n in neighbors):
        raise ConfigError("neighbor transition needs a non-empty adjacency", field="transition")
    for i, nbrs in enumerate(neighbors):
        if nbrs:
            F[i, list(nbrs)] += coupling / len(nbrs)
    return F


def estimate_obs_noise(empty_room, shrinkage=0.05):
    """Shrunk sample covariance of noise-only sensor recordings.

    ``(1 - shrinkage) * C + shrinkage * trace(C) / S * I`` with ``C`` the
    unbiased sample covariance over time.
    """
    data = recording_data(empty_room)
    if data.shape[1] < 2:
        raise InsufficientDataError(f"need at least 2 empty-room samples, got {data.shape[1]}")
    if not 0.0 <= shrinkage <= 1.0:
        raise ConfigError(f"shrinkage must be in [0, 1], got {shrinkage}", field="shrinkage")
    s = data.shape[0]
    cov = np.atleast_2d(np.cov(data, ddof=1))
    iso = np.trace(cov) / s
    if shrinkage == 1.0:
        out = iso * np.eye(s)
    else:
        out = (1.0 - shrinkage) * cov + shrinkage * iso * np.eye(s)
    out = 0.5 * (out + out.T)
    return SpdMatrix(out)


def estimate_state_noise(mne_series, floor=1e-12):
    """Diagonal state noise from the variance of differenced static estimates.

    Entry ``p`` is ``max(floor, var_k(J_k,p - J_{k-1},p))``. The full sample
    covariance is rank-deficient when N is much smaller than P, hence the
    diagonal restriction.
    """
    data = series_data(mne_series)
    if data.shape[1] < 3:
        raise InsufficientDataError(f"need at least 3 time steps, got {data.shape[1]}")
    if not floor > 0:
        raise ConfigError(f"state noise floor must be positive, got {floor}", field="sigma_w_floor")
    var = np.var(np.diff(data, axis=1), axis=1, ddof=1)
    return SpdMatrix(np.diag(np.maximum(var, floor)))


def init_state(mne_series, state_noise):
    """Initial mean (first static frame) and covariance (the state noise itself)."""
    data = series_data(mne_series)
    if data.shape[1] < 1:
        raise InsufficientDataError("empty estimate series")
    return data[:, 0].copy(), state_noise
