"""Persistence landscapes and landscape contours sampled on a shared grid."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .homology import PersistenceDiagram


@dataclass(frozen=True)
class EpsGrid:
    eps_max: float
    num_samples: int = 2001

    def __post_init__(self):
        if not self.eps_max > 0:
            raise ValueError("eps_max must be > 0")
        if self.num_samples < 2:
            raise ValueError("num_samples must be >= 2")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(0.0, self.eps_max, self.num_samples)

    @property
    def spacing(self) -> float:
        return self.eps_max / (self.num_samples - 1)


@dataclass(frozen=True)
class Landscape:
    """``envelopes[m]`` is the (m+1)-th largest tent value at each grid point."""

    grid: EpsGrid
    envelopes: np.ndarray
    dim: int

    @property
    def depth(self) -> int:
        return self.envelopes.shape[0]

    def envelope(self, m: int) -> np.ndarray:
        """1-based envelope ``lambda_m``; zero beyond the stored depth."""
        if m < 1:
            raise ValueError("envelopes are numbered from 1")
        if m > self.depth:
            return np.zeros(self.grid.num_samples)
        return self.envelopes[m - 1]


@dataclass(frozen=True)
class Contour:
    grid: EpsGrid
    values: np.ndarray
    truncation: int


@dataclass(frozen=True)
class LandscapeStats:
    overlap_mean: float
    max_half_persistence: float


def persistence_function(pair, eps):
    """Tent of height ``(d - b) / 2`` centred at ``(b + d) / 2``."""
    b, d = pair
    if not d > b:
        raise ValueError(f"death must exceed birth, got ({b}, {d})")
    half = 0.5 * (d - b)
    mid = 0.5 * (b + d)
    out = np.maximum(half - np.abs(np.asarray(eps, dtype=float) - mid), 0.0)
    return out if out.ndim else float(out)


def _finite_pairs(diagram: PersistenceDiagram, dim: int, eps_max: float, noise_floor: float):
    sel = diagram.dims == dim
    births = diagram.births[sel]
    deaths = np.minimum(diagram.deaths[sel], eps_max)
    keep = (deaths > births) & (deaths - births >= noise_floor)
    return births[keep], deaths[keep]


def tent_matrix(births: np.ndarray, deaths: np.ndarray, grid: EpsGrid) -> np.ndarray:
    """Tent values, one row per pair."""
    eps = grid.values
    half = 0.5 * (deaths - births)
    mid = 0.5 * (births + deaths)
    return np.maximum(half[:, None] - np.abs(eps[None, :] - mid[:, None]), 0.0)


def build_landscape(
    diagram: PersistenceDiagram,
    dim: int,
    grid: EpsGrid,
    noise_floor: float = 0.0,
    max_depth: int | None = None,
) -> Landscape:
    """Landscape of the ``dim``-dimensional pairs of ``diagram``.

    Infinite deaths are truncated at ``grid.eps_max``.  Pairs with
    persistence below ``noise_floor`` are dropped.  ``max_depth`` keeps only
    the top envelopes, which is all a contour needs.
    """
    if noise_floor < 0:
        raise ValueError("noise_floor must be >= 0")
    births, deaths = _finite_pairs(diagram, dim, grid.eps_max, noise_floor)
    if births.size == 0:
        return Landscape(grid, np.zeros((1, grid.num_samples)), dim)
    tents = tent_matrix(births, deaths, grid)
    depth = tents.shape[0] if max_depth is None else min(max_depth, tents.shape[0])
    if depth < tents.shape[0]:
        # only the top `depth` order statistics are needed
        tents = -np.partition(-tents, depth - 1, axis=0)[:depth]
    envelopes = -np.sort(-tents, axis=0)[:depth]
    return Landscape(grid, envelopes, dim)


def contour(landscape: Landscape, m_prime: int) -> Contour:
    """Pointwise mean of the first ``m_prime`` envelopes (missing ones count as 0)."""
    if m_prime < 1:
        raise ValueError("m_prime must be >= 1")
    k = min(m_prime, landscape.depth)
    total = landscape.envelopes[:k].sum(axis=0)
    return Contour(landscape.grid, total / m_prime, m_prime)


def diagram_contour(
    diagram: PersistenceDiagram, dim: int, grid: EpsGrid, m_prime: int, noise_floor: float = 0.0
) -> Contour:
    return contour(build_landscape(diagram, dim, grid, noise_floor, max_depth=m_prime), m_prime)


def lp_norm(a, b, p: float = 2.0) -> float:
    """Lp norm of ``a - b`` by trapezoid quadrature on the shared grid."""
    if a.grid != b.grid:
        raise ValueError("contours live on different grids")
    if not p >= 1:
        raise ValueError("p must be >= 1")
    diff = np.abs(np.asarray(a.values) - np.asarray(b.values))
    if np.isinf(p):
        return float(diff.max())
    return float(np.trapezoid(diff**p, dx=a.grid.spacing) ** (1.0 / p))


def landscape_stats(landscape: Landscape) -> LandscapeStats:
    """Mean envelope overlap on the support of ``lambda_1`` and peak height."""
    env = landscape.envelopes
    support = env[0] > 0
    if not support.any():
        return LandscapeStats(0.0, 0.0)
    overlap = (env[:, support] > 0).sum(axis=0)
    return LandscapeStats(float(overlap.mean()), float(env[0].max()))


def write_landscape_csv(path, landscape: Landscape) -> None:
    eps = landscape.grid.values
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eps"] + [f"lambda_{m + 1}" for m in range(landscape.depth)])
        for g in range(eps.size):
            writer.writerow([repr(float(eps[g]))] + [repr(float(v)) for v in landscape.envelopes[:, g]])


def write_contour_csv(path, c: Contour) -> None:
    eps = c.grid.values
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eps", "L"])
        for e, v in zip(eps.tolist(), c.values.tolist()):
            writer.writerow([repr(e), repr(v)])
