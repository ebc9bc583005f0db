"""Vietoris-Rips persistent homology (dimensions 0 and 1) over Z/2.

Two independent routes produce the diagram:

``method="fast"``
    H0 by Kruskal union-find with the elder rule; H1 by reducing the edge
    coboundary matrix in reverse filtration order, skipping (clearing) the
    edges that already killed an H0 class.
``method="standard"``
    The textbook column reduction of the full boundary matrix, run from the
    top dimension down so that pivots clear columns one dimension lower.

Columns are Python ints used as bit sets, so column addition is ``^`` and
the pivot is found with ``bit_length``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

EUCLIDEAN = "euclidean"
TOROIDAL = "toroidal"


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    box_side: float | None = None
    periodic: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a point cloud needs at least one point")
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        if self.periodic:
            if self.box_side is None or not self.box_side > 0:
                raise ValueError("a periodic cloud needs a positive box_side")
            if (pts < 0).any() or (pts >= self.box_side).any():
                raise ValueError("periodic coordinates must lie in [0, box_side)")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class FiltrationParams:
    eps_max: float
    metric: str = EUCLIDEAN
    max_dim: int = 1

    def __post_init__(self):
        if not self.eps_max > 0:
            raise ValueError("eps_max must be > 0")
        if self.metric not in (EUCLIDEAN, TOROIDAL):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.max_dim != 1:
            raise ValueError("only max_dim=1 is supported")


@dataclass(frozen=True)
class FilteredComplex:
    """VR complex up to dimension 2, each dimension sorted by (value, lex)."""

    num_vertices: int
    edges: np.ndarray
    edge_values: np.ndarray
    triangles: np.ndarray
    triangle_values: np.ndarray
    eps_max: float

    def simplices(self) -> Iterator[tuple[float, int, tuple[int, ...]]]:
        """All simplices as ``(value, dim, vertices)`` in filtration order."""
        items = [(0.0, 0, (v,)) for v in range(self.num_vertices)]
        items += [(float(v), 1, tuple(int(x) for x in e)) for e, v in zip(self.edges, self.edge_values)]
        items += [
            (float(v), 2, tuple(int(x) for x in t)) for t, v in zip(self.triangles, self.triangle_values)
        ]
        items.sort()
        return iter(items)


@dataclass(frozen=True)
class PersistenceDiagram:
    """Birth/death pairs; ``death == inf`` marks features alive at ``eps_max``."""

    dims: np.ndarray
    births: np.ndarray
    deaths: np.ndarray
    eps_max: float | None = None

    @classmethod
    def from_pairs(cls, pairs, eps_max: float | None = None) -> "PersistenceDiagram":
        arr = np.array(sorted((int(d), float(b), float(x)) for d, b, x in pairs), dtype=float)
        if arr.size == 0:
            arr = np.zeros((0, 3))
        return cls(arr[:, 0].astype(int), arr[:, 1], arr[:, 2], eps_max)

    def __len__(self) -> int:
        return self.dims.size

    def pairs(self, dim: int | None = None) -> list[tuple[float, float]]:
        sel = np.ones(self.dims.size, bool) if dim is None else self.dims == dim
        return list(zip(self.births[sel].tolist(), self.deaths[sel].tolist()))

    def as_tuples(self) -> list[tuple[int, float, float]]:
        return list(zip(self.dims.tolist(), self.births.tolist(), self.deaths.tolist()))

    def finite_deaths(self, dim: int | None = None, eps_max: float | None = None) -> np.ndarray:
        """Deaths with infinite values replaced by ``eps_max``."""
        cap = self.eps_max if eps_max is None else eps_max
        sel = np.ones(self.dims.size, bool) if dim is None else self.dims == dim
        d = self.deaths[sel].copy()
        if np.isinf(d).any():
            if cap is None:
                raise ValueError("eps_max is needed to truncate infinite deaths")
            d[np.isinf(d)] = cap
        return d

    def scaled(self, factor: float) -> "PersistenceDiagram":
        eps = None if self.eps_max is None else self.eps_max * factor
        return PersistenceDiagram(self.dims.copy(), self.births * factor, self.deaths * factor, eps)


def distance_matrix(cloud: PointCloud, metric: str = EUCLIDEAN) -> np.ndarray:
    pts = cloud.points
    delta = pts[:, None, :] - pts[None, :, :]
    if metric == TOROIDAL:
        if cloud.box_side is None:
            raise ValueError("the toroidal metric needs a cloud with box_side")
        box = cloud.box_side
        delta = np.abs(delta)
        delta = np.minimum(delta, box - delta)
    elif metric != EUCLIDEAN:
        raise ValueError(f"unknown metric {metric!r}")
    dx, dy = delta[..., 0], delta[..., 1]
    dist = np.sqrt(dx * dx + dy * dy)
    # exact symmetry regardless of rounding in the subtraction
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    return dist


def vr_filtration(cloud: PointCloud, params: FiltrationParams) -> FilteredComplex:
    dist = distance_matrix(cloud, params.metric)
    return vr_from_distances(dist, params.eps_max)


def vr_from_distances(dist: np.ndarray, eps_max: float) -> FilteredComplex:
    n = dist.shape[0]
    adj = dist <= eps_max
    np.fill_diagonal(adj, False)
    ei, ej = np.nonzero(np.triu(adj, 1))
    ev = dist[ei, ej]
    order = np.lexsort((ej, ei, ev))
    edges = np.column_stack((ei[order], ej[order])).astype(np.int64)
    edge_values = ev[order]

    tris = []
    for i in range(n):
        nb = np.flatnonzero(adj[i, i + 1 :]) + i + 1
        if nb.size < 2:
            continue
        sub = np.triu(adj[np.ix_(nb, nb)], 1)
        a, b = np.nonzero(sub)
        if a.size:
            tris.append(np.column_stack((np.full(a.size, i), nb[a], nb[b])))
    if tris:
        triangles = np.concatenate(tris).astype(np.int64)
        i, j, k = triangles.T
        tv = np.maximum(np.maximum(dist[i, j], dist[i, k]), dist[j, k])
        order = np.lexsort((k, j, i, tv))
        triangles = triangles[order]
        triangle_values = tv[order]
    else:
        triangles = np.zeros((0, 3), dtype=np.int64)
        triangle_values = np.zeros(0)
    return FilteredComplex(n, edges, edge_values, triangles, triangle_values, float(eps_max))


class _ElderUnionFind:
    """Union-find whose root is always the oldest (lowest-index) vertex."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if rx < ry:
            self.parent[ry] = rx
        else:
            self.parent[rx] = ry
        return True


def _persistence_fast(cx: FilteredComplex) -> list[tuple[int, float, float]]:
    pairs: list[tuple[int, float, float]] = []
    uf = _ElderUnionFind(cx.num_vertices)
    n_edges = len(cx.edge_values)
    positive = np.zeros(n_edges, dtype=bool)
    evals = cx.edge_values.tolist()
    for e, (u, v) in enumerate(cx.edges.tolist()):
        if uf.union(u, v):
            if evals[e] > 0.0:
                pairs.append((0, 0.0, evals[e]))
        else:
            positive[e] = True
    roots = {uf.find(v) for v in range(cx.num_vertices)}
    pairs.extend((0, 0.0, math.inf) for _ in roots)

    pos_edges = np.flatnonzero(positive)
    if pos_edges.size == 0:
        return pairs
    # coboundary columns: edge -> set bits at triangle filtration indices
    n = cx.num_vertices
    key_to_edge = {}
    for e in pos_edges.tolist():
        u, v = cx.edges[e]
        key_to_edge[int(u) * n + int(v)] = e
    cofaces: dict[int, list[int]] = {e: [] for e in pos_edges.tolist()}
    if len(cx.triangles):
        i, j, k = (cx.triangles[:, c].astype(np.int64) for c in range(3))
        for t, keys in enumerate(zip((i * n + j).tolist(), (i * n + k).tolist(), (j * n + k).tolist())):
            for key in keys:
                e = key_to_edge.get(key)
                if e is not None:
                    cofaces[e].append(t)
    tvals = cx.triangle_values.tolist()
    owner: dict[int, int] = {}
    reduced: dict[int, int] = {}
    for e in reversed(pos_edges.tolist()):
        col = 0
        for t in cofaces[e]:
            col |= 1 << t
        while col:
            piv = (col & -col).bit_length() - 1
            other = owner.get(piv)
            if other is None:
                owner[piv] = e
                reduced[e] = col
                if tvals[piv] > evals[e]:
                    pairs.append((1, evals[e], tvals[piv]))
                break
            col ^= reduced[other]
        else:
            pairs.append((1, evals[e], math.inf))
    return pairs


def _persistence_standard(cx: FilteredComplex) -> list[tuple[int, float, float]]:
    simplices = list(cx.simplices())
    index = {s[2]: idx for idx, s in enumerate(simplices)}
    columns: list[int] = []
    for value, dim, verts in simplices:
        col = 0
        if dim > 0:
            for drop in range(len(verts)):
                col |= 1 << index[verts[:drop] + verts[drop + 1 :]]
        columns.append(col)
    low_owner: dict[int, int] = {}
    paired: set[int] = set()
    pairs: list[tuple[int, float, float]] = []
    for target_dim in (2, 1):
        for j, (value, dim, _) in enumerate(simplices):
            if dim != target_dim:
                continue
            if j in paired:
                # cleared: this simplex already killed a class of its own dimension
                columns[j] = 0
                continue
            col = columns[j]
            while col:
                low = col.bit_length() - 1
                other = low_owner.get(low)
                if other is None:
                    break
                col ^= columns[other]
            columns[j] = col
            if col:
                low = col.bit_length() - 1
                low_owner[low] = j
                paired.add(low)
                birth = simplices[low][0]
                if value > birth:
                    pairs.append((simplices[low][1], birth, value))
    for j, (value, dim, _) in enumerate(simplices):
        if dim <= 1 and j not in paired and columns[j] == 0:
            pairs.append((dim, value, math.inf))
    return pairs


def persistence(cx: FilteredComplex, method: str = "fast") -> PersistenceDiagram:
    """Persistence diagram in dimensions 0 and 1 with zero-length pairs dropped."""
    if method == "fast":
        pairs = _persistence_fast(cx)
    elif method == "standard":
        pairs = _persistence_standard(cx)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PersistenceDiagram.from_pairs(pairs, cx.eps_max)


def diagram(cloud: PointCloud, params: FiltrationParams, method: str = "fast") -> PersistenceDiagram:
    return persistence(vr_filtration(cloud, params), method)


def write_diagram_csv(path, dgm: PersistenceDiagram) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dim", "birth", "death"])
        for d, b, x in dgm.as_tuples():
            writer.writerow([d, repr(b), "inf" if math.isinf(x) else repr(x)])


def read_diagram_csv(path, eps_max: float | None = None) -> PersistenceDiagram:
    pairs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["dim", "birth", "death"]:
            raise ValueError(f"{path}: expected header dim,birth,death")
        for row in reader:
            pairs.append((int(row["dim"]), float(row["birth"]), float(row["death"])))
    return PersistenceDiagram.from_pairs(pairs, eps_max)
