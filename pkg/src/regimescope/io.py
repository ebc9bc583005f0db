"""CSV ingestion and emission for frames and simulation snapshots."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .homology import PointCloud
from .motion import Snapshot

log = logging.getLogger(__name__)

FRAME_HEADER = ("frame_index", "track_id", "x", "y")
SNAPSHOT_HEADER = ("time_index", "particle_id", "x", "y", "interacting")


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class Frames:
    """Observed point clouds in frame order.

    ``sparse`` lists the frame indices holding fewer than two points; those
    frames have no meaningful loop structure.
    """

    frame_indices: list
    clouds: list
    sparse: list

    def __len__(self) -> int:
        return len(self.clouds)

    def __getitem__(self, k):
        return self.clouds[k]

    def __iter__(self):
        return iter(self.clouds)

    @property
    def counts(self) -> list[int]:
        return [len(c) for c in self.clouds]


def _header(reader, expected, path):
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: no frames") from None
    header = [h.strip() for h in header]
    missing = [h for h in expected if h not in header]
    if missing:
        raise DataError(f"{path}:1: missing header column(s) {', '.join(missing)}")
    return {h: header.index(h) for h in expected}


def _float(text, what, path, line):
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{path}:{line}: non-numeric {what} {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{path}:{line}: non-finite {what} {text!r}")
    return v


def _int(text, what, path, line):
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{path}:{line}: {what} must be an integer, got {text!r}") from None


def load_frames(path) -> Frames:
    """Read a ``frame_index,track_id,x,y`` table into one cloud per frame."""
    by_frame: dict[int, list[tuple[float, float]]] = {}
    seen: dict[tuple[int, str], int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        col = _header(reader, FRAME_HEADER, path)
        width = max(col.values()) + 1
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < width:
                raise DataError(f"{path}:{line}: expected at least {width} fields, got {len(row)}")
            frame = _int(row[col["frame_index"]].strip(), "frame_index", path, line)
            track = row[col["track_id"]].strip()
            if (frame, track) in seen:
                raise DataError(
                    f"{path}:{line}: duplicate (frame_index, track_id) = ({frame}, {track}), "
                    f"first seen on line {seen[(frame, track)]}"
                )
            seen[(frame, track)] = line
            x = _float(row[col["x"]].strip(), "x", path, line)
            y = _float(row[col["y"]].strip(), "y", path, line)
            by_frame.setdefault(frame, []).append((x, y))
    if not by_frame:
        raise DataError(f"{path}: no frames")
    indices = sorted(by_frame)
    clouds = [PointCloud(np.array(by_frame[f])) for f in indices]
    sparse = [f for f, c in zip(indices, clouds) if len(c) < 2]
    for f in sparse:
        log.warning("frame %d has fewer than 2 points", f)
    return Frames(indices, clouds, sparse)


def normalize_density(cloud: PointCloud, target_density: float) -> tuple[PointCloud, float]:
    """Rescale into the square ``[0, side]^2`` with ``K / side^2 = target_density``.

    The cloud is translated so its bounding box starts at the origin and
    scaled uniformly so the longer bounding-box side equals ``side``.
    Returns the new cloud and the scale factor.
    """
    if not target_density > 0:
        raise ValueError("target_density must be > 0")
    k = len(cloud)
    if k < 2:
        raise DataError("normalisation needs at least 2 points")
    pts = cloud.points
    lo = pts.min(axis=0)
    extent = float((pts.max(axis=0) - lo).max())
    if extent == 0.0:
        raise DataError("all points coincide; the cloud cannot be normalised")
    side = math.sqrt(k / target_density)
    scale = side / extent
    return PointCloud((pts - lo) * scale, box_side=side), scale


def write_snapshots_csv(path, snapshots: list[Snapshot]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SNAPSHOT_HEADER)
        for snap in snapshots:
            t = int(snap.time_index)
            for i, ((x, y), inter) in enumerate(zip(snap.positions.tolist(), snap.interacting.tolist())):
                writer.writerow([t, i, repr(x), repr(y), int(inter)])


def read_snapshots_csv(path, box_side: float | None = None) -> tuple[list[int], list[PointCloud]]:
    """Load a snapshot table back into per-time clouds (periodic if ``box_side`` is given)."""
    rows: dict[int, list[tuple[int, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        col = _header(reader, SNAPSHOT_HEADER, path)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) < len(SNAPSHOT_HEADER):
                raise DataError(f"{path}:{line}: expected {len(SNAPSHOT_HEADER)} fields, got {len(row)}")
            t = _int(row[col["time_index"]], "time_index", path, line)
            pid = _int(row[col["particle_id"]], "particle_id", path, line)
            x = _float(row[col["x"]], "x", path, line)
            y = _float(row[col["y"]], "y", path, line)
            rows.setdefault(t, []).append((pid, x, y))
    if not rows:
        raise DataError(f"{path}: no snapshots")
    times = sorted(rows)
    clouds = []
    for t in times:
        pts = np.array([(x, y) for _, x, y in sorted(rows[t])])
        clouds.append(PointCloud(pts, box_side, periodic=box_side is not None))
    return times, clouds
