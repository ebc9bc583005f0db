"""Time-resolved comparison of two groups of particle runs.

For every common time index the runs of each group are reduced to landscape
contours and compared with the Westfall-Young adjusted rank test.  The
resulting curve of minimum adjusted p-values is turned into a transition
interval by a sustained-rejection rule.

Tests at different time indices are independent; nothing is corrected
across the time axis.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fda
from .homology import EUCLIDEAN, FiltrationParams, PointCloud, diagram
from .landscape import EpsGrid, diagram_contour
from .motion import SimConfig, initial_state, run_schedule
from .io import normalize_density

NULL_ALPHA = 0.09
NULL_BETA = 0.024


@dataclass(frozen=True)
class SnapshotSeries:
    label: str
    runs: list
    times: list

    def __post_init__(self):
        if len(self.runs) < 2:
            raise ValueError(f"series {self.label!r} needs at least 2 runs")
        for k, run in enumerate(self.runs):
            if len(run) != len(self.times):
                raise ValueError(f"run {k} of {self.label!r} has {len(run)} snapshots, expected {len(self.times)}")

    @property
    def num_runs(self) -> int:
        return len(self.runs)


@dataclass(frozen=True)
class DetectionParams:
    eps_max: float = 4.0
    grid_samples: int = 2001
    m_prime: int = 5
    noise_floor: float = 0.0
    metric: str = EUCLIDEAN
    dim: int = 1
    num_perms: int = 1000
    alpha_level: float = 0.05
    window: int = 10
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.dim not in (0, 1):
            raise ValueError("dim must be 0 or 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0 < self.alpha_level < 1:
            raise ValueError("alpha_level must lie in (0, 1)")

    @property
    def grid(self) -> EpsGrid:
        return EpsGrid(self.eps_max, self.grid_samples)


@dataclass(frozen=True)
class TransitionReport:
    times: list
    min_adjusted_p: np.ndarray
    alpha_level: float
    window: int
    transition_interval: tuple | None = None
    global_stat: np.ndarray = field(default=None, repr=False)

    def write_csv(self, path) -> None:
        interval = "none" if self.transition_interval is None else "%d,%d" % self.transition_interval
        with open(path, "w", newline="") as fh:
            fh.write(f"# alpha_level={self.alpha_level!r}\n# window={self.window}\n# interval={interval}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["time", "min_adjusted_p"])
            for t, p in zip(self.times, self.min_adjusted_p.tolist()):
                writer.writerow([t, repr(p)])


def cloud_contour(cloud: PointCloud, params: DetectionParams) -> np.ndarray:
    dgm = diagram(cloud, FiltrationParams(params.eps_max, params.metric))
    return diagram_contour(dgm, params.dim, params.grid, params.m_prime, params.noise_floor).values


def _run_contours(args):
    run, params = args
    return np.stack([cloud_contour(c, params) for c in run])


def _pool_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def series_contours(series: SnapshotSeries, params: DetectionParams) -> np.ndarray:
    """Contours of every snapshot, shape ``(runs, times, grid)``."""
    out = _pool_map(_run_contours, [(run, params) for run in series.runs], params.threads)
    return np.stack(out)


def infer_transition(times, pvalues, alpha_level: float, window: int):
    """First run of at least ``window`` consecutive p <= alpha, as (start, end) times."""
    if window < 1:
        raise ValueError("window must be >= 1")
    hit = np.asarray(pvalues) <= alpha_level
    n = hit.size
    i = 0
    while i < n:
        if not hit[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and hit[j + 1]:
            j += 1
        if j - i + 1 >= window:
            return times[i], times[j]
        i = j + 1
    return None


def time_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def compare_contours(
    contours_a: np.ndarray, contours_b: np.ndarray, times, params: DetectionParams
) -> TransitionReport:
    """Per-time global tests on precomputed ``(runs, times, grid)`` contour arrays."""
    if contours_a.shape[1] != len(times) or contours_b.shape[1] != len(times):
        raise ValueError("contour arrays do not match the time indices")
    grid = params.grid
    pmin = np.empty(len(times))
    gstat = np.empty(len(times))
    for k in range(len(times)):
        sample = fda.ContourSample(contours_a[:, k], contours_b[:, k], grid)
        curve = fda.global_test(sample, params.num_perms, time_seed(params.seed, k))
        pmin[k] = curve.global_p
        gstat[k] = curve.global_stat
    interval = infer_transition(list(times), pmin, params.alpha_level, params.window)
    return TransitionReport(list(times), pmin, params.alpha_level, params.window, interval, gstat)


def compare_series(a: SnapshotSeries, b: SnapshotSeries, params: DetectionParams) -> TransitionReport:
    if list(a.times) != list(b.times):
        raise ValueError("series have different time indices")
    ca = series_contours(a, params)
    cb = ca if b is a else series_contours(b, params)
    return compare_contours(ca, cb, a.times, params)


def run_seed(seed: int, run: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(run,)).generate_state(1)[0])


def _simulate_one(args):
    phases, positions = args
    init = None if positions is None else initial_state(phases[0], positions)
    snaps = run_schedule(list(phases), init)
    box = phases[0].box_side
    return [int(s.time_index) for s in snaps], [PointCloud(s.positions, box, periodic=True) for s in snaps]


def simulate_series(
    phases: list[SimConfig],
    num_runs: int,
    label: str = "",
    seed: int = 0,
    initial_positions: np.ndarray | None = None,
    threads: int = 1,
) -> SnapshotSeries:
    """Independent runs of a (possibly multi-phase) parameter schedule.

    Run ``s`` uses the seed ``SeedSequence(seed, spawn_key=(s,))`` in every
    phase; ``initial_positions`` (if given) is shared by all runs.
    """
    jobs = []
    for s in range(num_runs):
        rs = run_seed(seed, s)
        jobs.append(([cfg.replace(seed=rs) for cfg in phases], initial_positions))
    results = _pool_map(_simulate_one, jobs, threads)
    times = results[0][0]
    return SnapshotSeries(label, [clouds for _, clouds in results], times)


def matched_null_series(
    observed: list[PointCloud],
    num_runs: int,
    target_density: float = 0.5,
    steps_per_frame: int = 50,
    seed: int = 0,
    overrides: dict | None = None,
    threads: int = 1,
) -> SnapshotSeries:
    """Random-movement simulations started from the observed first frame.

    The first frame is rescaled to ``target_density`` particles per unit area
    in a square box; every run starts from exactly those positions and is
    evolved for as many frames as were observed.
    """
    if not observed:
        raise ValueError("observed run is empty")
    first = observed[0]
    if len(first) < 2:
        raise ValueError("the first observed frame needs at least 2 points")
    norm, _ = normalize_density(first, target_density)
    side = norm.box_side
    positions = np.mod(norm.points, side)
    positions[positions >= side] = 0.0
    settings = dict(
        num_particles=len(first),
        box_side=side,
        alpha=NULL_ALPHA,
        beta=NULL_BETA,
        num_steps=(len(observed) - 1) * steps_per_frame,
        snapshot_stride=steps_per_frame,
    )
    settings.update(overrides or {})
    cfg = SimConfig(**settings)
    return simulate_series([cfg], num_runs, "null", seed, positions, threads)


def frames_to_series(label: str, runs: list[list[PointCloud]], times=None, target_density: float | None = None):
    """Wrap observed runs as a series, optionally density-normalising each frame."""
    if target_density is not None:
        runs = [[normalize_density(c, target_density)[0] for c in run] for run in runs]
    if times is None:
        times = list(range(len(runs[0])))
    return SnapshotSeries(label, runs, list(times))

