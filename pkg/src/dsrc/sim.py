"""Simulation protocol: synthetic sources, SNR-calibrated noise, and the sweep.

A sweep evaluates MNE, the Kalman filter and the fixed-interval smoother
on every (SNR, lambda) cell. Cells are independent: each derives its noise
from ``(rng_seed, snr index)``, owns a private checkpoint directory, and
writes one JSON record on completion, so an interrupted sweep resumes by
skipping cells whose record already exists.
"""
import csv
import hashlib
import io
import json
import logging
import math
import os
import shutil
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import evaluation
from .errors import ConfigError, DegenerateSnrError, DsrcError
from .forward import build_sensor_array, build_source_space, lead_field
from .matcore import SpdMatrix, as_dense
from .solvers import CheckpointStore, default_source_prior, fis_smooth, kalman_filter, mne_solve
from .statespace import (RecordingBlock, StateModel, build_transition, estimate_obs_noise,
                         estimate_state_noise, init_state)

log = logging.getLogger(__name__)

METHODS = ("mne", "kf", "fis")
CSV_COLUMNS = ("method", "snr", "lambda", "mse_all", "mse_active", "lag_samples", "runtime_ms")
SNR_INFINITE = 1e12

# region seeds default to the vertices nearest these directions
_SEED_DIRECTIONS = np.array([
    [math.cos(math.radians(45)) * math.cos(math.radians(a)),
     math.cos(math.radians(45)) * math.sin(math.radians(a)),
     math.sin(math.radians(45))]
    for a in (0.0, 120.0, 240.0)
])


@dataclass
class SimConfig:
    """All knobs of a simulation sweep; serialised as flat JSON."""

    subdivision_level: int = 3
    crop: str = "hemisphere"
    source_radius: float = 0.08
    fold_angle: float = 60.0
    n_sensors: int = 64
    shell_radius: float = 0.10
    cap_half_angle: float = 90.0
    lead_field_mode: str = "normal"
    region_seeds: list = None
    region_sizes: list = field(default_factory=lambda: [8, 8, 9])
    region_radius: int = None
    sample_rate: float = 600.0
    n_steps: int = 120
    carrier_freqs: list = field(default_factory=lambda: [10.0, 20.0])
    envelope_freq: float = 0.4
    amplitude: float = 1.0
    snr_grid: list = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0])
    lambda_grid: list = field(default_factory=lambda: [0.5, 1.0, 3.0])
    noise_mode: str = "sensor"
    empty_room_samples: int = 2000
    obs_noise_shrinkage: float = 0.05
    state_noise_floor: float = 1e-12
    transition: str = "identity"
    coupling: float = 0.0
    checkpoint_dtype: str = "binary32"
    keep_checkpoints: bool = False
    timing_in_csv: bool = False
    rng_seed: int = 0

    REQUIRED = ("snr_grid", "lambda_grid", "n_steps", "sample_rate", "rng_seed")

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not isinstance(self.n_steps, int) or self.n_steps < 2:
            raise ConfigError(f"must be an integer >= 2, got {self.n_steps!r}", field="n_steps")
        if not self.sample_rate > 0:
            raise ConfigError(f"must be positive, got {self.sample_rate}", field="sample_rate")
        nyquist = self.sample_rate / 2.0
        for f in list(self.carrier_freqs) + [self.envelope_freq]:
            if not 0 <= f < nyquist:
                raise ConfigError(f"frequency {f} Hz not below Nyquist {nyquist} Hz",
                                  field="carrier_freqs")
        if not self.snr_grid or any(not s > 0 for s in self.snr_grid):
            raise ConfigError("all SNR values must be positive", field="snr_grid")
        if not self.lambda_grid or any(not v > 0 for v in self.lambda_grid):
            raise ConfigError("all lambda values must be positive", field="lambda_grid")
        if self.noise_mode not in ("sensor", "source"):
            raise ConfigError(f"must be 'sensor' or 'source', got {self.noise_mode!r}",
                              field="noise_mode")
        if any(int(c) < 1 for c in self.region_sizes):
            raise ConfigError("region sizes must be positive", field="region_sizes")
        if self.region_seeds is not None and len(self.region_seeds) != len(self.region_sizes):
            raise ConfigError("need one seed per region", field="region_seeds")
        if self.empty_room_samples < 2:
            raise ConfigError("need at least 2 samples", field="empty_room_samples")

    @classmethod
    def from_dict(cls, doc, require=True):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown field(s): {', '.join(unknown)}", field=unknown[0])
        if require:
            for name in cls.REQUIRED:
                if name not in doc:
                    raise ConfigError("missing required field", field=name)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path):
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found", field="config") from None
        return cls.from_dict(doc)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Noise-free source time courses and the active-region layout."""

    J_true: np.ndarray
    active_mask: np.ndarray
    region_ids: np.ndarray
    sample_rate: float

    def __post_init__(self):
        for arr in (self.J_true, self.active_mask, self.region_ids):
            arr.flags.writeable = False

    @property
    def n_sources(self):
        return self.J_true.shape[0]

    @property
    def n_steps(self):
        return self.J_true.shape[1]


def build_geometry(config):
    """Source space, sensor array and lead field described by ``config``."""
    space = build_source_space(config.subdivision_level, config.source_radius, config.crop,
                               config.fold_angle)
    sensors = build_sensor_array(config.n_sensors, config.shell_radius, config.cap_half_angle,
                                 source_radius=config.source_radius)
    return space, sensors, lead_field(space, sensors, config.lead_field_mode)


def default_seeds(space, count):
    """Vertices nearest to fixed upper-hemisphere directions, one per region."""
    unit = space.radial()
    seeds = []
    for d in _SEED_DIRECTIONS[:count]:
        order = np.argsort(-(unit @ d), kind="stable")
        seeds.append(int(next(i for i in order if i not in seeds)))
    if len(seeds) < count:
        raise ConfigError(f"cannot place {count} default seeds", field="region_seeds")
    return seeds


def grow_regions(space, seeds, sizes, radius=None):
    """Breadth-first region growth with ascending-index tie breaking.

    Regions are disjoint: a vertex claimed by an earlier region is skipped.
    Returns an int array with the region index per vertex (-1 = inactive).
    """
    p = space.n_sources
    if sum(sizes) > p:
        raise ConfigError(f"{sum(sizes)} active sources requested but only {p} vertices",
                          field="region_sizes")
    labels = -np.ones(p, dtype=np.int64)
    for rid, (seed, size) in enumerate(zip(seeds, sizes)):
        if not 0 <= seed < p:
            raise ConfigError(f"seed {seed} outside the source space", field="region_seeds")
        if labels[seed] >= 0:
            raise ConfigError(f"seed {seed} already belongs to region {labels[seed]}",
                              field="region_seeds")
        taken = 0
        queue = deque([(seed, 0)])
        seen = {seed}
        while queue and taken < size:
            v, depth = queue.popleft()
            if labels[v] >= 0:
                continue
            labels[v] = rid
            taken += 1
            if radius is not None and depth >= radius:
                continue
            for w in sorted(space.neighbors[v]):
                if w not in seen and labels[w] < 0:
                    seen.add(w)
                    queue.append((w, depth + 1))
        if taken < size:
            raise ConfigError(f"region {rid} reached only {taken} of {size} vertices",
                              field="region_sizes")
    return labels


def source_waveform(config):
    """Unit envelope-modulated carrier mixture sampled at ``t = k / fs``."""
    t = np.arange(config.n_steps) / config.sample_rate
    carrier = sum(np.sin(2.0 * np.pi * f * t) for f in config.carrier_freqs)
    return config.amplitude * np.sin(2.0 * np.pi * config.envelope_freq * t) * carrier


def synthesize_sources(config, space):
    """Ground truth with identical, in-phase waveforms on every active vertex."""
    seeds = config.region_seeds
    if seeds is None:
        seeds = default_seeds(space, len(config.region_sizes))
    labels = grow_regions(space, [int(s) for s in seeds],
                          [int(c) for c in config.region_sizes], config.region_radius)
    mask = labels >= 0
    J = np.zeros((space.n_sources, config.n_steps))
    J[mask] = source_waveform(config)
    return GroundTruth(J_true=J, active_mask=mask, region_ids=labels,
                       sample_rate=float(config.sample_rate))


def _rng(seed, *stream):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(s) for s in stream]]))


def noise_scale(truth, H, snr, mode="sensor"):
    """Noise standard deviation that realises ``snr`` for this truth and lead field.

    Sensor mode: ``snr = |H J|_F^2 / (S N sigma^2)``. Source mode:
    ``snr = |H J|_F^2 / (trace(H H^T) N sigma^2)``, i.e. the same ratio measured
    after the source noise is projected to the sensors.
    """
    H = as_dense(getattr(H, "matrix", H), "H")
    if not snr > 0:
        raise ConfigError(f"snr must be positive, got {snr}", field="snr")
    clean = H @ truth.J_true
    power = float(np.sum(clean * clean))
    if power == 0.0:
        raise DegenerateSnrError("clean sensor signal is zero; SNR is undefined")
    if snr >= SNR_INFINITE:
        return 0.0
    n = truth.n_steps
    denom = H.shape[0] if mode == "sensor" else float(np.sum(H * H))
    return math.sqrt(power / (denom * n * snr))


def inject_noise(truth, H, snr, mode="sensor", seed=0):
    """Noisy recording for ``truth`` at ``snr``; returns ``(RecordingBlock, sigma)``.

    ``seed`` may be an int or a tuple of ints (hashed into one stream).
    Ground truth is never modified.
    """
    H = as_dense(getattr(H, "matrix", H), "H")
    sigma = noise_scale(truth, H, snr, mode)
    rng = _rng(*(seed if isinstance(seed, tuple) else (seed,)))
    if mode == "sensor":
        y = H @ truth.J_true
        if sigma:
            y = y + sigma * rng.standard_normal(y.shape)
    elif mode == "source":
        J = truth.J_true
        if sigma:
            J = J + sigma * rng.standard_normal(J.shape)
        y = H @ J
    else:
        raise ConfigError(f"noise mode must be 'sensor' or 'source', got {mode!r}",
                          field="noise_mode")
    return RecordingBlock(y, truth.sample_rate), sigma


def empty_room(H, sigma, n_samples, mode="sensor", seed=0):
    """Noise-only recording from the same noise process as :func:`inject_noise`."""
    H = as_dense(getattr(H, "matrix", H), "H")
    rng = _rng(*(seed if isinstance(seed, tuple) else (seed,)))
    if mode == "sensor":
        y = sigma * rng.standard_normal((H.shape[0], n_samples))
    else:
        y = H @ (sigma * rng.standard_normal((H.shape[1], n_samples)))
    return RecordingBlock(y)


@dataclass
class CellResult:
    snr_index: int
    lambda_index: int
    snr: float
    lam: float
    records: list
    diagnostics: dict
    error: str = None

    @property
    def key(self):
        return cell_key(self.snr_index, self.lambda_index)


def cell_key(snr_index, lambda_index):
    return f"cell_s{snr_index:03d}_l{lambda_index:03d}"


def _build_model(config, space, H, Y, obs_noise, lam, workers):
    R = default_source_prior(H, obs_noise)
    mne = mne_solve(H, R, obs_noise, lam, Y, workers=workers)
    sigma_w = estimate_state_noise(mne, config.state_noise_floor)
    J0, W0 = init_state(mne, sigma_w)
    F = build_transition(space, config.transition, config.coupling)
    model = StateModel(H=H, F=F, state_noise=sigma_w, obs_noise=obs_noise,
                       init_mean=J0, init_cov=W0)
    return mne, model


def run_cell(config, space, H, truth, snr_index, lambda_index, workdir=None, workers=None):
    """Solve and score one (SNR, lambda) cell with all three methods."""
    snr = float(config.snr_grid[snr_index])
    lam = float(config.lambda_grid[lambda_index])
    H = as_dense(getattr(H, "matrix", H), "H")
    Y, sigma = inject_noise(truth, H, snr, config.noise_mode,
                            seed=(config.rng_seed, snr_index, 0))
    er = empty_room(H, sigma, config.empty_room_samples, config.noise_mode,
                    seed=(config.rng_seed, snr_index, 1))
    if sigma == 0.0:
        # noiseless limit: keep the observation covariance well defined
        obs_noise = SpdMatrix(np.eye(H.shape[0]) * 1e-30)
    else:
        obs_noise = estimate_obs_noise(er, config.obs_noise_shrinkage)

    timings = {}
    series = {}
    diagnostics = {"sigma": sigma}
    t0 = time.perf_counter()
    mne, model = _build_model(config, space, H, Y, obs_noise, lam, workers)
    timings["mne"] = time.perf_counter() - t0
    series["mne"] = mne

    tmp_root = Path(workdir) if workdir is not None else None
    ckpt_dir = (tmp_root / "ckpt") if tmp_root is not None else None
    if ckpt_dir is None:
        import tempfile
        ckpt_tmp = tempfile.TemporaryDirectory(prefix="dsrc_ckpt_")
        ckpt_dir = Path(ckpt_tmp.name)
    store = CheckpointStore(ckpt_dir, config.checkpoint_dtype)
    try:
        t0 = time.perf_counter()
        kf = kalman_filter(model, Y, store, workers=workers)
        timings["kf"] = time.perf_counter() - t0
        series["kf"] = kf
        t0 = time.perf_counter()
        fis = fis_smooth(model, kf, store, workers=workers)
        timings["fis"] = timings["kf"] + time.perf_counter() - t0
        series["fis"] = fis
    finally:
        if not config.keep_checkpoints:
            shutil.rmtree(ckpt_dir, ignore_errors=True)

    reports = {m: evaluation.mse_report(s, truth, m) for m, s in series.items()}
    vertex = evaluation.peak_vertex(mne, truth.active_mask)
    diagnostics["peak_vertex"] = vertex
    diagnostics["trace_margin"] = max(
        s - f for s, f in zip(fis.logs["cov_trace"], fis.logs["filtered_cov_trace"]))
    records = []
    for m in METHODS:
        try:
            lag = evaluation.lag_estimate(series[m], truth, vertex)
        except DsrcError:
            lag = None
        rep = reports[m]
        records.append({
            "method": m,
            "snr": snr,
            "lambda": lam,
            "mse_all": rep.mean_all,
            "mse_active": rep.mean_active,
            "lag_samples": lag,
            "runtime_ms": 1000.0 * timings[m],
            "rel_change_all_pct": evaluation.relative_mse_change(rep, reports["mne"], "all"),
            "rel_change_active_pct": evaluation.relative_mse_change(rep, reports["mne"], "active"),
            "amplitude_ratio": evaluation.amplitude_ratio(series[m], truth, vertex),
        })
    return CellResult(snr_index, lambda_index, snr, lam, records, diagnostics), series


@dataclass
class SweepResult:
    """All cell records of a sweep, in grid order."""

    config: SimConfig
    cells: list

    def rows(self):
        for cell in self.cells:
            yield from cell.records

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for cell in self.cells:
            for rec in cell.records:
                writer.writerow(_csv_row(rec, self.config.timing_in_csv))
        return buf.getvalue()

    def failed(self):
        return [c for c in self.cells if c.error is not None]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def _csv_row(rec, timing):
    return [rec["method"], _fmt(rec["snr"]), _fmt(rec["lambda"]), _fmt(rec["mse_all"]),
            _fmt(rec["mse_active"]), _fmt(rec["lag_samples"]),
            _fmt(rec["runtime_ms"]) if timing and rec.get("runtime_ms") is not None else ""]


def _cell_to_json(cell):
    return {"key": cell.key, "snr_index": cell.snr_index, "lambda_index": cell.lambda_index,
            "snr": cell.snr, "lambda": cell.lam, "records": cell.records,
            "diagnostics": cell.diagnostics, "error": cell.error}


def _cell_from_json(doc):
    return CellResult(doc["snr_index"], doc["lambda_index"], doc["snr"], doc["lambda"],
                      doc["records"], doc.get("diagnostics", {}), doc.get("error"))


def _write_json_atomic(path, doc):
    path = Path(path)
    tmp = path.with_name(path.name + f".{os.getpid()}.tmp")
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True))
    os.replace(tmp, path)


def _load_cell(path, config):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError):
        return None
    if doc.get("config_sha256") != config.digest():
        return None
    return _cell_from_json(doc)


def _cell_job(config, space, H, truth, si, li, cell_dir, workers):
    try:
        cell, _ = run_cell(config, space, H, truth, si, li, workdir=cell_dir, workers=workers)
    except DsrcError as exc:
        log.warning("cell %s failed: %s", cell_key(si, li), exc)
        cell = CellResult(si, li, float(config.snr_grid[si]), float(config.lambda_grid[li]),
                          [], {"step": getattr(exc, "step", None)}, error=f"{type(exc).__name__}: {exc}")
    return cell


def run_sweep(config, space=None, sensors=None, H=None, out_dir=None, *, workers=None,
              parallelism=1, on_cell=None):
    """Run every (SNR, lambda) cell; resumable when ``out_dir`` is given.

    Completed cells are stored as ``<out_dir>/cells/<key>.json`` and skipped
    on the next call with the same configuration. ``on_cell`` is called
    after each newly completed cell (used for progress and kill tests).
    Per-cell solver failures are recorded, not raised.
    """
    if space is None or H is None:
        space, sensors, H = build_geometry(config)
    truth = synthesize_sources(config, space)
    H = as_dense(getattr(H, "matrix", H), "H")

    cells_dir = None
    if out_dir is not None:
        cells_dir = Path(out_dir) / "cells"
        cells_dir.mkdir(parents=True, exist_ok=True)

    grid = [(si, li) for si in range(len(config.snr_grid)) for li in range(len(config.lambda_grid))]
    done = {}
    todo = []
    for si, li in grid:
        if cells_dir is not None:
            cached = _load_cell(cells_dir / f"{cell_key(si, li)}.json", config)
            if cached is not None:
                done[(si, li)] = cached
                continue
        todo.append((si, li))
    if done:
        log.info("resuming sweep: %d of %d cells already complete", len(done), len(grid))

    def finish(cell):
        if cells_dir is not None:
            doc = _cell_to_json(cell)
            doc["config_sha256"] = config.digest()
            _write_json_atomic(cells_dir / f"{cell.key}.json", doc)
        done[(cell.snr_index, cell.lambda_index)] = cell
        log.info("cell %s done%s", cell.key, f" (error: {cell.error})" if cell.error else "")
        if on_cell is not None:
            on_cell(cell)

    def workdir(si, li):
        return None if cells_dir is None else cells_dir / cell_key(si, li)

    if parallelism > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(_cell_job, config, space, H, truth, si, li, workdir(si, li),
                                   workers) for si, li in todo]
            for fut in futures:
                finish(fut.result())
    else:
        for si, li in todo:
            finish(_cell_job(config, space, H, truth, si, li, workdir(si, li), workers))

    result = SweepResult(config, [done[k] for k in grid])
    if out_dir is not None:
        (Path(out_dir) / "results.csv").write_text(result.to_csv())
    return result
