"""Pointwise two-sample rank tests on curves with Westfall-Young min-P adjustment.

At each grid point the two groups of curve values are pooled and ranked
(mid-ranks for ties); the statistic is the rank sum of group B.  Small
tie-free samples get exact p-values from the null distribution of the rank
sum, everything else the normal approximation with tie-corrected variance
and a 0.5 continuity correction.

Permuting group labels only changes *which* pooled ranks are summed, never
the ranks themselves, so the permuted rank sums for a batch of label
assignments are a single ``labels @ ranks`` product.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .landscape import EpsGrid

EXACT_MAX_SIZE = 10


def ranks(values) -> np.ndarray:
    """Ascending ranks starting at 1; ties share the mean of their positions."""
    return rankdata(np.asarray(values, dtype=float), method="average")


def null_mean(n_a: int, n_b: int) -> float:
    return n_b * (n_a + n_b + 1) / 2.0


def standardized_statistic(t, n_a: int, n_b: int | None = None):
    """Centre and scale a rank sum by its tie-free null moments.

    With equal group sizes ``S`` this is ``(T - S(2S+1)/2) / sqrt(S^2 (2S+1) / 12)``.
    """
    n_b = n_a if n_b is None else n_b
    n = n_a + n_b
    sd = math.sqrt(n_a * n_b * (n + 1) / 12.0)
    return (np.asarray(t, dtype=float) - null_mean(n_a, n_b)) / sd


@lru_cache(maxsize=64)
def _exact_tables(n_a: int, n_b: int) -> tuple[int, np.ndarray]:
    """Two-sided exact p-value for every attainable tie-free rank sum.

    Returns ``(t_min, p)`` with ``p[t - t_min]``.
    """
    n = n_a + n_b
    t_min = n_b * (n_b + 1) // 2
    t_max = n_b * (2 * n - n_b + 1) // 2
    # counts[k][s]: number of k-subsets of {1..r} with sum s, built up over r
    counts = np.zeros((n_b + 1, t_max + 1), dtype=np.float64)
    counts[0, 0] = 1.0
    for r in range(1, n + 1):
        for k in range(min(n_b, r), 0, -1):
            counts[k, r:] += counts[k - 1, : t_max + 1 - r]
    dist = counts[n_b, t_min:]
    total = math.comb(n, n_b)
    lower = np.cumsum(dist) / total
    upper = np.cumsum(dist[::-1])[::-1] / total
    return t_min, np.minimum(1.0, 2.0 * np.minimum(lower, upper))


def _exact_p(t, n_a: int, n_b: int) -> np.ndarray:
    t_min, table = _exact_tables(n_a, n_b)
    idx = np.rint(np.asarray(t, dtype=float)).astype(np.int64) - t_min
    return table[idx]


def _normal_p(t, n_a: int, n_b: int, tie_sum) -> np.ndarray:
    n = n_a + n_b
    var = n_a * n_b / 12.0 * ((n + 1) - np.asarray(tie_sum, dtype=float) / (n * (n - 1)))
    dev = np.abs(np.asarray(t, dtype=float) - null_mean(n_a, n_b))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.maximum(dev - 0.5, 0.0) / np.sqrt(var)
        p = np.minimum(1.0, 2.0 * ndtr(-z))
    return np.where(var > 0, p, 1.0)


def _tie_sums(pooled: np.ndarray) -> np.ndarray:
    """Sum of ``t^3 - t`` over tie groups, per column of ``pooled``."""
    srt = np.sort(pooled, axis=0)
    n, g = srt.shape
    out = np.zeros(g)
    if n < 2:
        return out
    # run lengths of equal values down each column
    new_group = np.vstack([np.ones((1, g), bool), srt[1:] != srt[:-1]])
    group_id = np.cumsum(new_group, axis=0)
    for col in np.flatnonzero(~new_group[1:].all(axis=0)):
        sizes = np.bincount(group_id[:, col])
        out[col] = float((sizes**3 - sizes).sum())
    return out


@dataclass(frozen=True)
class ContourSample:
    """Curves of two groups evaluated on one grid, shape ``(S, G)`` each."""

    group_a: np.ndarray
    group_b: np.ndarray
    grid: EpsGrid | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.group_a, dtype=float))
        b = np.atleast_2d(np.asarray(self.group_b, dtype=float))
        if a.shape[1] != b.shape[1]:
            raise ValueError("groups are sampled on grids of different sizes")
        if self.grid is not None and a.shape[1] != self.grid.num_samples:
            raise ValueError("curve length does not match the grid")
        if a.shape[0] < 2 or b.shape[0] < 2:
            raise ValueError("each group needs at least 2 curves")
        object.__setattr__(self, "group_a", a)
        object.__setattr__(self, "group_b", b)

    @property
    def sizes(self) -> tuple[int, int]:
        return self.group_a.shape[0], self.group_b.shape[0]

    @property
    def pooled(self) -> np.ndarray:
        return np.vstack([self.group_a, self.group_b])

    def swapped(self) -> "ContourSample":
        return ContourSample(self.group_b, self.group_a, self.grid)


class _RankSumModel:
    """Everything about a pooled sample that label permutations leave unchanged."""

    def __init__(self, sample: ContourSample):
        self.n_a, self.n_b = sample.sizes
        pooled = sample.pooled
        self.ranks = rankdata(pooled, axis=0, method="average")
        self.tie_sum = _tie_sums(pooled)
        self.degenerate = (pooled == pooled[0]).all(axis=0)
        self.exact = (self.tie_sum == 0) & (max(self.n_a, self.n_b) <= EXACT_MAX_SIZE)

    def rank_sums(self, labels: np.ndarray) -> np.ndarray:
        """Rank sums of the curves flagged in each row of ``labels``."""
        return labels.astype(float) @ self.ranks

    def pvalues(self, t: np.ndarray) -> np.ndarray:
        p = _normal_p(t, self.n_a, self.n_b, self.tie_sum)
        if self.exact.any():
            cols = self.exact
            p[..., cols] = _exact_p(t[..., cols], self.n_a, self.n_b)
        p[..., self.degenerate] = 1.0
        return p

    @property
    def observed_labels(self) -> np.ndarray:
        lab = np.zeros(self.n_a + self.n_b, dtype=bool)
        lab[self.n_a :] = True
        return lab


def wilcoxon_rank_sum(sample_a, sample_b) -> tuple[float, float]:
    """Rank sum of ``sample_b`` in the pooled sample and its two-sided p-value."""
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    r = ranks(pooled)
    t = float(r[a.size :].sum())
    if np.all(pooled == pooled[0]):
        return t, 1.0
    tie_sum = float(_tie_sums(pooled[:, None])[0])
    if tie_sum == 0 and max(a.size, b.size) <= EXACT_MAX_SIZE:
        return t, float(_exact_p(t, a.size, b.size))
    return t, float(_normal_p(t, a.size, b.size, tie_sum))


def pointwise_pvalues(sample: ContourSample) -> np.ndarray:
    model = _RankSumModel(sample)
    t = model.rank_sums(model.observed_labels[None, :])[0]
    return model.pvalues(t[None, :])[0]


def permutation_labels(n_a: int, n_b: int, replicates, seed: int) -> np.ndarray:
    """Group-B indicator rows, one per replicate index.

    Replicate ``r`` shuffles whole curves with its own stream
    ``SeedSequence(seed, spawn_key=(r,))``, so any subset of replicates can
    be generated independently and in any order.
    """
    n = n_a + n_b
    rows = np.zeros((len(replicates), n), dtype=bool)
    for i, r in enumerate(replicates):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(r),)))
        rows[i, rng.permutation(n)[:n_b]] = True
    return rows


def all_labelings(n_a: int, n_b: int) -> np.ndarray:
    n = n_a + n_b
    combos = list(itertools.combinations(range(n), n_b))
    rows = np.zeros((len(combos), n), dtype=bool)
    for i, c in enumerate(combos):
        rows[i, list(c)] = True
    return rows


def permute_sample(sample: ContourSample, labels: np.ndarray) -> ContourSample:
    """Relabel whole curves: rows flagged in ``labels`` become group B."""
    pooled = sample.pooled
    return ContourSample(pooled[~labels], pooled[labels], sample.grid)


def minp_counts(raw: np.ndarray, order: np.ndarray, perm_p: np.ndarray) -> np.ndarray:
    """Per-rank counts of permutations whose successive minimum is <= raw p.

    ``order`` sorts ``raw`` ascending; ``perm_p`` is ``(P, G)`` in grid order.
    """
    sorted_p = perm_p[:, order]
    successive_min = np.minimum.accumulate(sorted_p[:, ::-1], axis=1)[:, ::-1]
    return (successive_min <= raw[order][None, :]).sum(axis=0)


def _minp_adjust(model: _RankSumModel, raw: np.ndarray, num_perms: int, seed: int, exhaustive: bool, batch_size: int):
    order = np.argsort(raw, kind="stable")
    counts = np.zeros(raw.size, dtype=np.int64)
    if exhaustive:
        labels = all_labelings(model.n_a, model.n_b)
        total = labels.shape[0]
        for start in range(0, total, batch_size):
            block = labels[start : start + batch_size]
            counts += minp_counts(raw, order, model.pvalues(model.rank_sums(block)))
    else:
        if num_perms < 100:
            raise ValueError("num_perms must be >= 100")
        total = num_perms
        for start in range(0, total, batch_size):
            reps = range(start, min(start + batch_size, total))
            block = permutation_labels(model.n_a, model.n_b, reps, seed)
            counts += minp_counts(raw, order, model.pvalues(model.rank_sums(block)))
    # a Monte Carlo count can undershoot the raw p for tiny groups; never report below it
    adjusted_sorted = np.maximum.accumulate(np.maximum(counts / total, raw[order]))
    adjusted = np.empty_like(adjusted_sorted)
    adjusted[order] = adjusted_sorted
    return adjusted


def westfall_young_adjust(
    sample: ContourSample,
    num_perms: int = 1000,
    seed: int = 0,
    exhaustive: bool = False,
    batch_size: int = 256,
) -> np.ndarray:
    """Min-P step-down adjusted p-values, in grid order.

    With ``exhaustive=True`` every label assignment is used once and
    ``num_perms`` is ignored.
    """
    model = _RankSumModel(sample)
    raw = model.pvalues(model.rank_sums(model.observed_labels[None, :]))[0]
    return _minp_adjust(model, raw, num_perms, seed, exhaustive, batch_size)


@dataclass(frozen=True)
class TestCurve:
    __test__ = False

    grid: EpsGrid | None
    statistic: np.ndarray
    raw_p: np.ndarray
    adjusted_p: np.ndarray
    global_stat: float
    global_p: float

    def rejects(self, alpha: float = 0.05) -> bool:
        return self.global_p <= alpha


def global_test(
    sample: ContourSample, num_perms: int = 1000, seed: int = 0, exhaustive: bool = False
) -> TestCurve:
    n_a, n_b = sample.sizes
    model = _RankSumModel(sample)
    t = model.rank_sums(model.observed_labels[None, :])[0]
    raw = model.pvalues(t[None, :])[0]
    stat = standardized_statistic(t, n_a, n_b)
    adjusted = _minp_adjust(model, raw, num_perms, seed, exhaustive, 256)
    return TestCurve(
        sample.grid,
        stat,
        raw,
        adjusted,
        float(np.max(np.abs(stat))),
        float(adjusted.min()),
    )


def write_test_curve_csv(path, curve: TestCurve) -> None:
    eps = curve.grid.values if curve.grid is not None else np.arange(curve.raw_p.size, dtype=float)
    with open(path, "w", newline="") as fh:
        fh.write(f"# global_stat={curve.global_stat!r}\n# global_p={curve.global_p!r}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eps", "stat", "raw_p", "adjusted_p"])
        for row in zip(eps.tolist(), curve.statistic.tolist(), curve.raw_p.tolist(), curve.adjusted_p.tolist()):
            writer.writerow([repr(v) for v in row])
