"""Command-line front end: ``dsrc forward | sweep | solve | report``.

Every subcommand writes ``manifest.json`` into its output directory, also
when it stops on an error after producing files. Exit codes are 0 on
success, 2 for configuration or contract errors, 3 for numerical failures
and 4 for corrupt or unreadable artifacts.
"""
import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, plots
from .errors import ConfigError, ContractError, DsrcError, NumericalError
from .forward import LeadField, load_sensor_array, load_source_space, save_geometry
from .matcore import BACKEND, SpdMatrix, read_matrix
from .matcore.io import file_sha256
from .sim import (CSV_COLUMNS, SimConfig, SweepResult, _cell_from_json, build_geometry,
                  cell_key, run_cell, run_sweep, synthesize_sources)
from .solvers import (CheckpointStore, EstimateSeries, default_source_prior, fis_smooth,
                      kalman_filter, mne_solve)
from .statespace import (RecordingBlock, StateModel, build_transition, estimate_obs_noise,
                         estimate_state_noise, init_state)

log = logging.getLogger("dsrc")

GEOMETRY_FIELDS = ("subdivision_level", "crop", "source_radius", "fold_angle", "n_sensors",
                   "shell_radius", "cap_half_angle", "lead_field_mode")
MANIFEST = "manifest.json"
BASELINE = "mne"


class Run:
    """Collects timings and outputs for one invocation and writes the manifest."""

    def __init__(self, command, out_dir, argv):
        self.command = command
        self.out = Path(out_dir)
        self.argv = list(argv)
        self.config_sha256 = None
        self.seeds = {}
        self.timings = {}
        self.outputs = []
        self.extra = {}

    def stage(self, name):
        run = self

        class _Stage:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = run.timings.get(name, 0.0) + time.perf_counter() - self.t0
                return False

        return _Stage()

    def add(self, *paths):
        for p in paths:
            p = Path(p)
            if p not in self.outputs:
                self.outputs.append(p)

    def add_tree(self, root):
        for p in sorted(Path(root).rglob("*")):
            if p.is_file():
                self.add(p)

    def write_manifest(self, status, exit_code, message=None):
        files = {}
        for p in self.outputs:
            if p.is_file():
                files[os.path.relpath(p, self.out)] = file_sha256(p)
        doc = {
            "artifact_version": __version__,
            "command": self.command,
            "argv": self.argv,
            "config_sha256": self.config_sha256,
            "rng_seeds": self.seeds,
            "timings_s": {k: round(v, 6) for k, v in self.timings.items()},
            "outputs": dict(sorted(files.items())),
            "matcore_backend": BACKEND,
            "status": status,
            "exit_code": exit_code,
        }
        if message is not None:
            doc["message"] = message
        doc.update(self.extra)
        path = self.out / MANIFEST
        tmp = path.with_name(MANIFEST + ".tmp")
        tmp.write_text(json.dumps(doc, indent=1))
        os.replace(tmp, path)
        return path

    @property
    def produced_files(self):
        return self.out.is_dir() and any(self.out.iterdir())


def verify_manifest(path):
    """Check every output listed in a manifest against its checksum.

    Returns the list of relative paths that are missing or differ.
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    bad = []
    for rel, digest in doc["outputs"].items():
        f = path.parent / rel
        if not f.is_file() or file_sha256(f) != digest:
            bad.append(rel)
    return bad


def load_config(path, seed_override=None):
    if path is None:
        raise ConfigError("a configuration file is required", field="config")
    config = SimConfig.load(path)
    if seed_override is not None:
        config.rng_seed = int(seed_override)
    return config


def geometry_digest(config):
    doc = {k: getattr(config, k) for k in GEOMETRY_FIELDS}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def write_forward(config, out_dir, run):
    """Build geometry and lead field from ``config`` and store them in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with run.stage("forward"):
        space, sensors, H = build_geometry(config)
    save_geometry(out_dir / "source_space.json", space)
    save_geometry(out_dir / "sensors.json", sensors)
    H.save(out_dir / "leadfield.dsmx")
    (out_dir / "geometry.json").write_text(json.dumps(
        {"geometry_sha256": geometry_digest(config),
         **{k: getattr(config, k) for k in GEOMETRY_FIELDS}}, indent=1))
    run.add(out_dir / "source_space.json", out_dir / "sensors.json", out_dir / "leadfield.dsmx",
            out_dir / "leadfield.dsmx.json", out_dir / "geometry.json")
    log.info("forward: %d sources, %d sensors, H %s", space.n_sources, sensors.n_sensors,
             H.matrix.shape)
    return space, sensors, H


def load_or_build_forward(config, fwd_dir, run):
    """Reuse forward artifacts in ``fwd_dir`` when their geometry matches."""
    fwd_dir = Path(fwd_dir)
    meta = fwd_dir / "geometry.json"
    if meta.is_file():
        try:
            stored = json.loads(meta.read_text()).get("geometry_sha256")
        except json.JSONDecodeError:
            stored = None
        if stored == geometry_digest(config):
            with run.stage("forward_load"):
                space = load_source_space(fwd_dir / "source_space.json")
                sensors = load_sensor_array(fwd_dir / "sensors.json")
                H = LeadField.load(fwd_dir / "leadfield.dsmx")
            run.add(fwd_dir / "source_space.json", fwd_dir / "sensors.json",
                    fwd_dir / "leadfield.dsmx", fwd_dir / "leadfield.dsmx.json", meta)
            log.info("forward: reusing artifacts in %s", fwd_dir)
            return space, sensors, H
    return write_forward(config, fwd_dir, run)


# ---------------------------------------------------------------- forward

def cmd_forward(args, run):
    config = load_config(args.config, args.seed_override)
    run.config_sha256 = config.digest()
    run.out.mkdir(parents=True, exist_ok=True)
    write_forward(config, run.out, run)


# ------------------------------------------------------------------ sweep

def _records(cells):
    return [r for c in cells for r in c.records]


def write_report(out_dir, config, cells, run):
    """Consolidated CSV/JSON, a relative-change summary and MSE plots."""
    out_dir = Path(out_dir)
    result = SweepResult(config, cells)
    csv_path = out_dir / "results.csv"
    csv_path.write_text(result.to_csv())
    doc = {"config": config.to_dict(), "config_sha256": config.digest(), "baseline": BASELINE,
           "columns": list(CSV_COLUMNS),
           "cells": [{"key": c.key, "snr": c.snr, "lambda": c.lam, "records": c.records,
                      "diagnostics": c.diagnostics, "error": c.error} for c in cells]}
    json_path = out_dir / "results.json"
    json_path.write_text(json.dumps(doc, indent=1, sort_keys=True))

    lines = [f"relative MSE change against baseline '{BASELINE}' (percent)",
             f"{'snr':>8} {'lambda':>7} {'method':>6} {'active':>10} {'all':>10} {'lag':>5}"]
    for c in cells:
        if c.error:
            lines.append(f"{c.snr:>8g} {c.lam:>7g}  failed: {c.error}")
            continue
        for r in c.records:
            lag = "" if r.get("lag_samples") is None else str(r["lag_samples"])
            lines.append(f"{r['snr']:>8g} {r['lambda']:>7g} {r['method']:>6} "
                         f"{r['rel_change_active_pct']:>10.2f} {r['rel_change_all_pct']:>10.2f} "
                         f"{lag:>5}")
    summary = out_dir / "summary.txt"
    summary.write_text("\n".join(lines) + "\n")
    run.add(csv_path, json_path, summary)

    plot_dir = out_dir / "plots"
    plot_dir.mkdir(exist_ok=True)
    recs = _records(cells)
    for li, lam in enumerate(config.lambda_grid):
        for scope in ("active", "all"):
            p = plot_dir / f"mse_{scope}_l{li:03d}.svg"
            p.write_text(plots.mse_vs_snr(recs, float(lam), scope))
            run.add(p)
    return result


def _nearest(values, target):
    return int(np.argmin([abs(float(v) - target) for v in values]))


def write_time_courses(out_dir, config, space, H, run, workers=None):
    """Per-region overlays of truth and the three estimates for the cell nearest SNR 1, lambda 1."""
    si = _nearest(config.snr_grid, 1.0)
    li = _nearest(config.lambda_grid, 1.0)
    truth = synthesize_sources(config, space)
    with run.stage("time_courses"):
        cell, series = run_cell(config, space, H, truth, si, li, workers=workers)
    t = np.arange(truth.n_steps) / truth.sample_rate
    plot_dir = Path(out_dir) / "plots"
    plot_dir.mkdir(exist_ok=True)
    mne = series["mne"].estimates
    peak = np.max(np.abs(mne), axis=1)
    for region in sorted(set(int(r) for r in truth.region_ids[truth.active_mask])):
        members = np.flatnonzero(truth.active_mask & (truth.region_ids == region))
        v = int(members[np.argmax(peak[members])])
        ests = {m: series[m].estimates[v] for m in ("mne", "kf", "fis")}
        title = (f"Region {chr(ord('A') + region)}, vertex {v} "
                 f"(SNR {cell.snr:g}, lambda {cell.lam:g})")
        p = plot_dir / f"timecourse_region_{region}.svg"
        p.write_text(plots.time_course(t, truth.J_true[v], ests, title))
        run.add(p)


def cmd_sweep(args, run):
    config = load_config(args.config, args.seed_override)
    run.config_sha256 = config.digest()
    run.seeds = {"rng_seed": config.rng_seed,
                 "noise_streams": [[config.rng_seed, si, k] for si in range(len(config.snr_grid))
                                   for k in (0, 1)]}
    out = run.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True))
    run.add(out / "config.json")
    space, sensors, H = load_or_build_forward(config, out / "forward", run)

    def progress(cell):
        status = f"failed: {cell.error}" if cell.error else "ok"
        log.info("cell %s snr=%g lambda=%g %s", cell.key, cell.snr, cell.lam, status)

    with run.stage("sweep"):
        result = run_sweep(config, space, sensors, H, out_dir=out, parallelism=args.parallelism,
                           on_cell=progress)
    run.add_tree(out / "cells")
    write_report(out, config, result.cells, run)
    ok = [c for c in result.cells if c.error is None]
    if ok:
        try:
            write_time_courses(out, config, space, H, run)
        except DsrcError as exc:
            log.warning("time-course plots skipped: %s", exc)
    failed = result.failed()
    run.extra["failed_cells"] = [{"key": c.key, "error": c.error,
                                  "step": c.diagnostics.get("step")} for c in failed]
    if failed and not ok:
        raise NumericalError(f"all {len(failed)} sweep cells failed")


# ------------------------------------------------------------------ solve

def _read_recording(path):
    if path is None:
        raise ConfigError("a recording MatrixFile is required", field="recording")
    p = Path(path)
    if not p.is_file():
        raise ContractError(f"recording {p} not found")
    return read_matrix(p)


def _obs_noise(args, y, config):
    if args.empty_room is not None:
        er = read_matrix(args.empty_room)
        if er.shape[0] != y.shape[0]:
            raise ContractError(f"empty-room data has {er.shape[0]} channels, recording has "
                                f"{y.shape[0]}")
        return estimate_obs_noise(RecordingBlock(er), config.obs_noise_shrinkage)
    var = float(np.mean(np.var(y, axis=1)))
    return SpdMatrix(np.eye(y.shape[0]) * (var if var > 0 else 1.0))


def _kf_outputs_match(out, store, n, p, digest):
    meta = out / "estimates_kf.dsmx.json"
    if not meta.is_file():
        return False
    try:
        if json.loads(meta.read_text()).get("input_sha256") != digest:
            return False
        store.verify(n_steps=n, dim=p)
    except (DsrcError, json.JSONDecodeError, KeyError):
        return False
    return True


def cmd_solve(args, run):
    config = load_config(args.config, args.seed_override)
    run.config_sha256 = config.digest()
    method = args.method
    y = _read_recording(args.recording)
    run.out.mkdir(parents=True, exist_ok=True)
    space, sensors, H = load_or_build_forward(config, run.out / "forward", run)
    H = H.matrix
    if y.shape[0] != H.shape[0]:
        raise ContractError(f"recording has {y.shape[0]} rows, lead field has {H.shape[0]} "
                            "sensors")
    lam = float(args.lam) if args.lam is not None else 1.0
    obs_noise = _obs_noise(args, y, config)
    input_digest = hashlib.sha256(
        (file_sha256(args.recording) + run.config_sha256 + repr(lam)).encode()).hexdigest()
    run.extra["lambda"] = lam

    with run.stage("mne"):
        R = default_source_prior(H, obs_noise)
        mne = mne_solve(H, R, obs_noise, lam, y)
    outputs = {"mne": mne}
    if method in ("kf", "fis"):
        sigma_w = estimate_state_noise(mne, config.state_noise_floor)
        J0, W0 = init_state(mne, sigma_w)
        F = build_transition(space, config.transition, config.coupling)
        model = StateModel(H=H, F=F, state_noise=sigma_w, obs_noise=obs_noise,
                           init_mean=J0, init_cov=W0)
        store = CheckpointStore(run.out / "checkpoints", config.checkpoint_dtype)
        if method == "fis" and _kf_outputs_match(run.out, store, y.shape[1], H.shape[1],
                                                 input_digest):
            log.info("solve: reusing filter pass in %s", run.out)
            kf = EstimateSeries.load(run.out / "estimates_kf.dsmx")
        else:
            if method == "fis":
                log.info("solve: no matching filter pass found, running kf first")
            with run.stage("kf"):
                kf = kalman_filter(model, y, store)
        outputs["kf"] = kf
        if method == "fis":
            with run.stage("fis"):
                outputs["fis"] = fis_smooth(model, kf, store)
        run.add(*store.paths())

    for name in ("mne", "kf", "fis"):
        if name not in outputs or (name == "mne" and method != "mne"):
            continue
        path = run.out / f"estimates_{name}.dsmx"
        outputs[name].save(path)
        meta_path = path.with_name(path.name + ".json")
        meta = json.loads(meta_path.read_text())
        meta["input_sha256"] = input_digest
        meta["lambda"] = lam
        meta_path.write_text(json.dumps(meta, indent=1))
        run.add(path, meta_path)


# ----------------------------------------------------------------- report

def cmd_report(args, run):
    out = run.out
    cfg_path = Path(args.config) if args.config else out / "config.json"
    config = load_config(cfg_path, args.seed_override)
    run.config_sha256 = config.digest()
    cells_dir = out / "cells"
    cells = []
    missing = []
    for si in range(len(config.snr_grid)):
        for li in range(len(config.lambda_grid)):
            p = cells_dir / f"{cell_key(si, li)}.json"
            if not p.is_file():
                missing.append(p.name)
                continue
            cells.append(_cell_from_json(json.loads(p.read_text())))
    if missing:
        raise ContractError(f"sweep in {out} is incomplete; missing {', '.join(missing[:5])}")
    run.add_tree(cells_dir)
    run.add(cfg_path)
    if args.method is not None:
        for c in cells:
            c.records = [r for r in c.records if r["method"] in (args.method, BASELINE)]
    with run.stage("report"):
        write_report(out, config, cells, run)


# ------------------------------------------------------------------- main

COMMANDS = {"forward": cmd_forward, "sweep": cmd_sweep, "solve": cmd_solve, "report": cmd_report}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dsrc", description="Static and dynamic MEG source estimation (MNE, KF, FIS).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", help="JSON SimConfig file")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed-override", type=int, default=None,
                       help="replace rng_seed from the config")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    p = sub.add_parser("forward", help="build source space, sensors and lead field")
    common(p, "forward_out")
    p = sub.add_parser("sweep", help="run the (SNR x lambda) simulation sweep")
    common(p, "sweep_out")
    p.add_argument("--parallelism", type=int, default=1, help="concurrent sweep cells")
    p = sub.add_parser("solve", help="apply a solver to a recording MatrixFile")
    common(p, "solve_out")
    p.add_argument("--recording", required=True, help="S x N DSMX recording")
    p.add_argument("--method", choices=("mne", "kf", "fis"), default="fis")
    p.add_argument("--empty-room", default=None, help="S x M DSMX empty-room recording")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="MNE regularisation weight (default 1)")
    p = sub.add_parser("report", help="regenerate CSV, summary and plots for a sweep directory")
    common(p, "sweep_out")
    p.add_argument("--method", choices=("mne", "kf", "fis"), default=None,
                   help="restrict the report to one method (plus the baseline)")
    return parser


def _setup_logging(verbose):
    try:
        sys.stdout.reconfigure(line_buffering=True)
    except (AttributeError, ValueError):
        pass
    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(logging.Formatter("%(asctime)s %(process)d %(levelname)s %(message)s"))
    root = logging.getLogger("dsrc")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    if getattr(args, "parallelism", 1) < 1:
        print("error: --parallelism must be >= 1", file=sys.stderr)
        return 2
    run = Run(args.command, args.out, argv)
    code, status, message = 0, "ok", None
    try:
        COMMANDS[args.command](args, run)
    except DsrcError as exc:
        code, status, message = exc.exit_code, "error", f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        code, status, message = 4, "error", f"{type(exc).__name__}: {exc}"
    if code:
        print(f"error: {message}", file=sys.stderr)
    if run.produced_files:
        run.write_manifest(status, code, message)
    return code


if __name__ == "__main__":
    sys.exit(main())
