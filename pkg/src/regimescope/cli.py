"""``regimescope`` command line: simulate, ph, landscape, test, detect.

Every command writes CSV artifacts named ``<command>_<seed>_<hash>...`` into
``--out`` plus a ``.json`` run summary, and prints the summary (with wall
time added) to stdout.  Exit codes: 0 success, 2 config error, 3 data error,
4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, detect, fda
from .config import ConfigError, RunConfig, load_config
from .homology import TOROIDAL, FiltrationParams, PersistenceDiagram, PointCloud, diagram
from .io import FRAME_HEADER, SNAPSHOT_HEADER, DataError, load_frames, normalize_density, read_snapshots_csv, write_snapshots_csv
from .landscape import EpsGrid, build_landscape, contour, landscape_stats
from .motion import initial_state, run_simulation

log = logging.getLogger("regimescope")

COMMANDS = ("simulate", "ph", "landscape", "test", "detect")
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
DIAGRAM_HEADER = ("time", "dim", "birth", "death")
CONTOUR_HEADER = ("time", "eps", "L")


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: str | None = None
    input_paths: tuple = ()
    group_b: tuple = ()
    output_dir: str = "."
    seed: int | None = None
    log_level: str = "WARNING"
    overrides: dict = field(default_factory=dict)


# ---------------------------------------------------------------- input


def _read_header(path) -> list[str]:
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if row and not row[0].startswith("#"):
                    return [c.strip() for c in row]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    raise DataError(f"{path}: no frames")


def _kind(path) -> str:
    header = _read_header(path)
    for kind, cols in (
        ("frames", FRAME_HEADER),
        ("snapshots", SNAPSHOT_HEADER),
        ("diagrams", DIAGRAM_HEADER),
        ("contours", CONTOUR_HEADER),
    ):
        if all(c in header for c in cols):
            return kind
    raise DataError(f"{path}:1: unrecognised header {','.join(header)}")


def read_points(path, cfg: RunConfig) -> tuple[list[int], list[PointCloud]]:
    """Clouds from a frames or snapshot CSV, ready for the configured metric."""
    kind = _kind(path)
    if kind == "frames":
        if cfg.metric == TOROIDAL:
            raise ConfigError("the toroidal metric applies to simulation snapshots only")
        frames = load_frames(path)
        if frames.sparse:
            raise DataError(f"{path}: frame(s) {frames.sparse} have fewer than 2 points")
        return list(frames.frame_indices), [normalize_density(c, cfg.target_density)[0] for c in frames]
    if kind == "snapshots":
        box = cfg.box_side if cfg.metric == TOROIDAL else None
        try:
            return read_snapshots_csv(path, box)
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: {exc}") from None
    raise DataError(f"{path}: expected a frames or snapshot table, got {kind}")


def read_diagrams(path, eps_max: float) -> tuple[list[int], list[PersistenceDiagram]]:
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            try:
                t = int(rec["time"])
                rows.setdefault(t, []).append((int(rec["dim"]), float(rec["birth"]), float(rec["death"])))
            except (TypeError, ValueError):
                raise DataError(f"{path}:{reader.line_num}: malformed diagram row") from None
    times = sorted(rows)
    return times, [PersistenceDiagram.from_pairs(rows[t], eps_max) for t in times]


def read_contours(path, grid: EpsGrid) -> tuple[list[int], np.ndarray]:
    rows: dict[int, list[float]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            try:
                rows.setdefault(int(rec["time"]), []).append(float(rec["L"]))
            except (TypeError, ValueError):
                raise DataError(f"{path}:{reader.line_num}: malformed contour row") from None
    times = sorted(rows)
    for t in times:
        if len(rows[t]) != grid.num_samples:
            raise DataError(f"{path}: time {t} has {len(rows[t])} grid values, config expects {grid.num_samples}")
    return times, np.array([rows[t] for t in times])


def _params(cfg: RunConfig, seed: int) -> detect.DetectionParams:
    return detect.DetectionParams(
        eps_max=cfg.eps_max,
        grid_samples=cfg.grid,
        m_prime=cfg.m_prime,
        noise_floor=cfg.noise_floor,
        metric=cfg.metric,
        dim=cfg.dim,
        num_perms=cfg.perms,
        alpha_level=cfg.alpha_level,
        window=cfg.window,
        seed=seed,
        threads=cfg.threads,
    )


def file_contours(path, cfg: RunConfig) -> tuple[list[int], np.ndarray]:
    """Contours ``(times, grid)`` of any supported input table."""
    params = _params(cfg, cfg.seed)
    kind = _kind(path)
    if kind == "contours":
        return read_contours(path, params.grid)
    if kind == "diagrams":
        times, dgms = read_diagrams(path, cfg.eps_max)
        rows = [contour(build_landscape(d, cfg.dim, params.grid, cfg.noise_floor, cfg.m_prime), cfg.m_prime).values for d in dgms]
        return times, np.array(rows)
    times, clouds = read_points(path, cfg)
    return times, np.array([detect.cloud_contour(c, params) for c in clouds])


def _group_contours(paths, cfg: RunConfig):
    out = [file_contours(p, cfg) for p in paths]
    lengths = {len(t) for t, _ in out}
    if len(lengths) != 1:
        raise DataError("runs in a group have different numbers of time points")
    return np.stack([c for _, c in out])


# ---------------------------------------------------------------- commands


def _digest_inputs(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _stem(command: str, cfg: RunConfig, *extra: str) -> str:
    return f"{command}_{cfg.seed}_{cfg.digest(command, *extra)}"


def cmd_simulate(cfg: RunConfig, man: RunManifest, out: Path, stem: str) -> list[Path]:
    sim = cfg.sim_config()
    written = []
    for r in range(cfg.runs):
        run_cfg = sim.replace(seed=detect.run_seed(cfg.seed, r))
        snaps, _ = run_simulation(run_cfg, initial_state(run_cfg))
        path = out / f"{stem}_r{r}.csv"
        write_snapshots_csv(path, snaps)
        written.append(path)
    return written


def _need_inputs(man: RunManifest):
    if not man.input_paths:
        raise ConfigError(f"{man.command} needs at least one input file")


def cmd_ph(cfg: RunConfig, man: RunManifest, out: Path, stem: str) -> list[Path]:
    _need_inputs(man)
    written = []
    fp = FiltrationParams(cfg.eps_max, cfg.metric)
    for src in man.input_paths:
        times, clouds = read_points(src, cfg)
        path = out / f"{stem}_{Path(src).stem}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(DIAGRAM_HEADER)
            for t, cloud in zip(times, clouds):
                for d, b, e in diagram(cloud, fp).as_tuples():
                    writer.writerow([t, d, repr(b), "inf" if np.isinf(e) else repr(e)])
        written.append(path)
    return written


def cmd_landscape(cfg: RunConfig, man: RunManifest, out: Path, stem: str) -> list[Path]:
    _need_inputs(man)
    grid = EpsGrid(cfg.eps_max, cfg.grid)
    fp = FiltrationParams(cfg.eps_max, cfg.metric)
    eps = grid.values.tolist()
    written = []
    for src in man.input_paths:
        if _kind(src) == "diagrams":
            times, dgms = read_diagrams(src, cfg.eps_max)
        else:
            times, clouds = read_points(src, cfg)
            dgms = [diagram(c, fp) for c in clouds]
        base = f"{stem}_{Path(src).stem}"
        cpath, spath = out / f"{base}.csv", out / f"{base}_stats.csv"
        with open(cpath, "w", newline="") as cf, open(spath, "w", newline="") as sf:
            cw = csv.writer(cf, lineterminator="\n")
            sw = csv.writer(sf, lineterminator="\n")
            cw.writerow(CONTOUR_HEADER)
            sw.writerow(["time", "overlap_mean", "max_half_persistence"])
            for t, dgm in zip(times, dgms):
                land = build_landscape(dgm, cfg.dim, grid, cfg.noise_floor)
                stats = landscape_stats(land)
                for e, v in zip(eps, contour(land, cfg.m_prime).values.tolist()):
                    cw.writerow([t, repr(e), repr(v)])
                sw.writerow([t, repr(stats.overlap_mean), repr(stats.max_half_persistence)])
        written += [cpath, spath]
    return written


def cmd_test(cfg: RunConfig, man: RunManifest, out: Path, stem: str) -> list[Path]:
    if len(man.input_paths) < 2 or len(man.group_b) < 2:
        raise ConfigError("test needs at least 2 files in each of --a and --b")
    ca = _group_contours(man.input_paths, cfg)
    cb = _group_contours(man.group_b, cfg)
    if ca.shape[1] != cb.shape[1]:
        raise DataError("groups have different numbers of time points")
    k = cfg.time_index
    if not -ca.shape[1] <= k < ca.shape[1]:
        raise ConfigError(f"time_index {k} out of range for {ca.shape[1]} time points")
    sample = fda.ContourSample(ca[:, k], cb[:, k], EpsGrid(cfg.eps_max, cfg.grid))
    curve = fda.global_test(sample, cfg.perms, cfg.seed)
    path = out / f"{stem}.csv"
    fda.write_test_curve_csv(path, curve)
    return [path]


def cmd_detect(cfg: RunConfig, man: RunManifest, out: Path, stem: str) -> list[Path]:
    params = _params(cfg, cfg.seed)
    if len(man.input_paths) < 2:
        raise ConfigError("detect needs at least 2 files in --a")
    ca = _group_contours(man.input_paths, cfg)
    written = []
    if man.group_b:
        if len(man.group_b) < 2:
            raise ConfigError("detect needs at least 2 files in --b")
        cb = _group_contours(man.group_b, cfg)
    else:
        # matched random-movement null started from the first observed run
        _, clouds = read_points(man.input_paths[0], cfg.replace(metric="euclidean"))
        overrides = dict(alpha=cfg.null_alpha, beta=cfg.null_beta, l_attract=cfg.l_attract,
                         l_repel=cfg.l_repel, l_max=cfg.l_max, tumble_period=cfg.tumble_period, dt=cfg.dt)
        null = detect.matched_null_series(clouds, cfg.null_runs, cfg.target_density, cfg.steps_per_frame,
                                          cfg.seed, overrides, cfg.threads)
        cb = detect.series_contours(null, params)
    if ca.shape[1] != cb.shape[1]:
        raise DataError(f"groups have {ca.shape[1]} and {cb.shape[1]} time points")
    report = detect.compare_contours(ca, cb, list(range(ca.shape[1])), params)
    path = out / f"{stem}.csv"
    report.write_csv(path)
    written.append(path)
    return written


HANDLERS = {
    "simulate": cmd_simulate,
    "ph": cmd_ph,
    "landscape": cmd_landscape,
    "test": cmd_test,
    "detect": cmd_detect,
}


def _versions() -> dict:
    return {"regimescope": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def run_pipeline(man: RunManifest, stdout=None) -> int:
    """Execute one command; returns the process exit code."""
    stdout = stdout or sys.stdout
    logging.basicConfig(level=man.log_level.upper(), format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        if man.command not in HANDLERS:
            raise ConfigError(f"unknown command {man.command!r}")
        overrides = dict(man.overrides)
        overrides["seed"] = man.seed
        env_threads = os.environ.get("REGIMESCOPE_THREADS")
        if env_threads:
            try:
                overrides["threads"] = int(env_threads)
            except ValueError:
                raise ConfigError(f"REGIMESCOPE_THREADS must be an integer, got {env_threads!r}") from None
        cfg = load_config(man.config_path, **overrides)
        out = Path(man.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
        for p in man.input_paths + man.group_b:
            if not Path(p).is_file():
                raise DataError(f"input file not found: {p}")
        stem = _stem(man.command, cfg, _digest_inputs(man.input_paths + man.group_b))
        written = HANDLERS[man.command](cfg, man, out, stem)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    summary = {
        "command": man.command,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "inputs": [str(p) for p in man.input_paths],
        "inputs_b": [str(p) for p in man.group_b],
        "outputs": [p.name for p in written],
        "versions": _versions(),
    }
    summary_path = out / f"{stem}.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary["summary_file"] = summary_path.name
    summary["wall_time_s"] = round(time.perf_counter() - start, 3)
    print(json.dumps(summary, sort_keys=True), file=stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int)
    common.add_argument("--alpha-level", type=float)
    common.add_argument("--eps-max", type=float)
    common.add_argument("--grid", type=int, help="number of eps grid samples")
    common.add_argument("--m-prime", type=int)
    common.add_argument("--noise-floor", type=float)
    common.add_argument("--perms", type=int)
    common.add_argument("--metric", choices=("euclidean", "toroidal"))
    common.add_argument("--dim", type=int, choices=(0, 1))
    common.add_argument("--window", type=int)
    common.add_argument("--log-level", default="WARNING")

    parser = argparse.ArgumentParser(prog="regimescope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the particle model and write snapshot CSVs")
    for name, text in (("ph", "persistence diagrams per frame"), ("landscape", "landscape contours per frame")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("inputs", nargs="+", help="frames or snapshot CSVs")
    for name, text in (("test", "two-group contour test at one time"), ("detect", "per-time tests and transition interval")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--a", nargs="+", required=True, metavar="FILE", help="runs of group A")
        p.add_argument("--b", nargs="+", default=[], metavar="FILE",
                       help="runs of group B (detect: omit to simulate a matched random null)")
    return parser


_OVERRIDE_FLAGS = ("threads", "alpha_level", "eps_max", "grid", "m_prime", "noise_floor", "perms", "metric", "dim", "window")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    inputs = tuple(getattr(args, "inputs", None) or getattr(args, "a", None) or ())
    man = RunManifest(
        command=args.command,
        config_path=args.config,
        input_paths=inputs,
        group_b=tuple(getattr(args, "b", None) or ()),
        output_dir=args.out,
        seed=args.seed,
        log_level=args.log_level,
        overrides={k: getattr(args, k) for k in _OVERRIDE_FLAGS},
    )
    return run_pipeline(man)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
