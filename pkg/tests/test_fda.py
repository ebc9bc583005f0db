import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import mannwhitneyu

from regimescope import fda
from regimescope.fda import ContourSample
from regimescope.landscape import EpsGrid

from oracles import wilcoxon_enumeration_p


@pytest.mark.parametrize(
    "values,want",
    [([3, 1, 2], [3, 1, 2]), ([5, 5], [1.5, 1.5]), ([0.2, 0.9, 0.9, 0.1], [2, 3.5, 3.5, 1])],
)
def test_ranks(values, want):
    np.testing.assert_array_equal(fda.ranks(values), want)


def test_wilcoxon_examples():
    assert fda.wilcoxon_rank_sum([1, 2, 3], [4, 5, 6]) == (15.0, pytest.approx(0.1, abs=1e-15))
    t, p = fda.wilcoxon_rank_sum([1, 3, 5], [2, 4, 6])
    assert t == 12.0
    assert p == pytest.approx(wilcoxon_enumeration_p([1, 3, 5], [2, 4, 6])[1], abs=1e-12)
    assert p == pytest.approx(0.7, abs=1e-12)
    assert fda.wilcoxon_rank_sum([1.0, 2.0, 3.0], [3.0, 2.0, 1.0])[1] >= 0.99
    with pytest.raises(ValueError):
        fda.wilcoxon_rank_sum([], [1.0])


def test_standardized_statistic():
    assert fda.standardized_statistic(637.5, 25) == pytest.approx(0.0)
    sd = math.sqrt(25**2 * 51 / 12)
    assert fda.standardized_statistic(637.5 + sd, 25) == pytest.approx(1.0)
    assert fda.standardized_statistic(3 * 7 / 2, 3) == 0.0


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_exact_matches_enumeration_and_scipy(n_a, n_b, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n_a), rng.normal(size=n_b)
    t, p = fda.wilcoxon_rank_sum(a, b)
    t_ref, p_ref = wilcoxon_enumeration_p(a, b)
    assert t == t_ref
    assert abs(p - p_ref) < 1e-12
    ref = mannwhitneyu(b, a, alternative="two-sided", method="exact").pvalue
    assert p == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_normal_approximation_matches_scipy_with_ties(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 5, size=12).astype(float)
    b = rng.integers(1, 6, size=15).astype(float)
    t, p = fda.wilcoxon_rank_sum(a, b)
    assert t == fda.ranks(np.concatenate([a, b]))[12:].sum()
    ref = mannwhitneyu(b, a, alternative="two-sided", method="asymptotic", use_continuity=True).pvalue
    assert p == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("s", [8, 9, 10])
def test_normal_close_to_exact(s):
    _, table = fda._exact_tables(s, s)
    t_min = s * (s + 1) // 2
    t = np.arange(t_min, t_min + table.size)
    approx = fda._normal_p(t, s, s, 0.0)
    assert np.abs(approx - table).max() <= 0.02


def test_exact_table_is_symmetric_and_bounded():
    _, table = fda._exact_tables(4, 4)
    np.testing.assert_allclose(table, table[::-1])
    assert table.max() == 1.0 and table.min() == pytest.approx(2 / math.comb(8, 4))


def curves(rng, s, g=50, shift=0.0):
    x = np.linspace(0, 1, g)
    amp = rng.normal(1.0, 0.2, size=(s, 1))
    return amp * np.sin(np.pi * x)[None, :] + rng.normal(0, 0.05, size=(s, g)) + shift


def test_pointwise_degenerate_columns():
    rng = np.random.default_rng(0)
    a, b = curves(rng, 6), curves(rng, 6)
    a[:, :10] = 0.0
    b[:, :10] = 0.0
    p = fda.pointwise_pvalues(ContourSample(a, b))
    np.testing.assert_array_equal(p[:10], 1.0)
    assert ((p >= 0) & (p <= 1)).all()


def test_pointwise_identical_multisets():
    rng = np.random.default_rng(1)
    a = curves(rng, 7)
    p = fda.pointwise_pvalues(ContourSample(a, a[::-1]))
    assert (p >= 0.99).all()


def test_pointwise_separated_groups():
    rng = np.random.default_rng(2)
    a = rng.normal(0, 0.1, size=(20, 30))
    b = a[rng.permutation(20)] + 1.0
    p = fda.pointwise_pvalues(ContourSample(a, b))
    assert (p < 0.01).all()


def test_label_symmetry_of_raw_and_exhaustive_adjusted():
    rng = np.random.default_rng(3)
    sample = ContourSample(curves(rng, 4), curves(rng, 4, shift=0.1))
    np.testing.assert_array_equal(fda.pointwise_pvalues(sample), fda.pointwise_pvalues(sample.swapped()))
    np.testing.assert_array_equal(
        fda.westfall_young_adjust(sample, exhaustive=True),
        fda.westfall_young_adjust(sample.swapped(), exhaustive=True),
    )


def test_exhaustive_two_point_toy():
    # column 0 separates the groups completely, column 1 interleaves them
    a = np.array([[1.0, 1.0], [2.0, 3.0], [3.0, 5.0]])
    b = np.array([[4.0, 2.0], [5.0, 4.0], [6.0, 6.0]])
    sample = ContourSample(a, b)
    np.testing.assert_allclose(fda.pointwise_pvalues(sample), [0.1, 0.7], atol=1e-15)
    # 4 of the 20 labelings reach min p <= 0.1, 14 have p_1 <= 0.7
    adjusted = fda.westfall_young_adjust(sample, exhaustive=True)
    np.testing.assert_allclose(adjusted, [4 / 20, 14 / 20], atol=1e-15)


def test_minp_monotone_in_sorted_order():
    raw = np.array([0.5, 0.001, 0.2])
    order = np.argsort(raw, kind="stable")
    perm = np.array([[0.9, 0.9, 0.01], [0.3, 0.8, 0.6]])
    counts = fda.minp_counts(raw, order, perm)
    # sorted raw = [0.001, 0.2, 0.5]; successive minima per permutation
    # row 0 -> [0.01, 0.01, 0.9], row 1 -> [0.3, 0.3, 0.3]
    np.testing.assert_array_equal(counts, [0, 1, 1])


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_adjusted_properties(n_a, n_b, seed, shift):
    rng = np.random.default_rng(seed)
    sample = ContourSample(curves(rng, n_a, 40), curves(rng, n_b, 40, shift))
    n_perm = 200
    raw = fda.pointwise_pvalues(sample)
    adj = fda.westfall_young_adjust(sample, n_perm, seed=seed % 1000)
    assert ((adj >= 0) & (adj <= 1)).all()
    assert (adj >= raw - 1.0 / n_perm).all()
    order = np.argsort(raw, kind="stable")
    assert (np.diff(adj[order]) >= 0).all()


def test_adjustment_is_deterministic_and_seeded():
    rng = np.random.default_rng(4)
    sample = ContourSample(curves(rng, 15), curves(rng, 15, shift=0.03))
    a = fda.westfall_young_adjust(sample, 300, seed=5)
    b = fda.westfall_young_adjust(sample, 300, seed=5, batch_size=7)
    c = fda.westfall_young_adjust(sample, 300, seed=6)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_permutation_streams_are_schedule_independent():
    full = fda.permutation_labels(5, 7, range(10), seed=9)
    part = fda.permutation_labels(5, 7, [3, 8], seed=9)
    np.testing.assert_array_equal(part, full[[3, 8]])
    assert (full.sum(axis=1) == 7).all()


def test_permutation_moves_whole_curves():
    g = 25
    tagged = np.arange(8)[:, None] * 1000.0 + np.arange(g)[None, :]
    sample = ContourSample(tagged[:4], tagged[4:])
    for labels in fda.permutation_labels(4, 4, range(20), seed=1):
        moved = fda.permute_sample(sample, labels)
        for row in np.vstack([moved.group_a, moved.group_b]):
            curve = row // 1000
            assert (curve == curve[0]).all()
            np.testing.assert_array_equal(row % 1000, np.arange(g))


def test_all_labelings():
    labels = fda.all_labelings(3, 3)
    assert labels.shape == (20, 6)
    assert len({tuple(r) for r in labels}) == 20


def test_global_test_consistency():
    rng = np.random.default_rng(6)
    grid = EpsGrid(1.0, 50)
    same = fda.global_test(ContourSample(curves(rng, 12), curves(rng, 12), grid), 500, seed=1)
    assert same.global_p == same.adjusted_p.min()
    assert same.global_stat == pytest.approx(np.abs(same.statistic).max())
    assert (same.adjusted_p >= same.raw_p - 1 / 500).all()
    assert not same.rejects(0.05)
    apart = fda.global_test(ContourSample(curves(rng, 12), curves(rng, 12, shift=0.5), grid), 500, seed=1)
    assert apart.rejects(0.05)


def test_identical_groups_never_reject():
    rng = np.random.default_rng(7)
    a = curves(rng, 6)
    curve = fda.global_test(ContourSample(a, a.copy()), 200)
    assert curve.global_p == 1.0


def test_input_validation():
    with pytest.raises(ValueError):
        ContourSample(np.zeros((1, 5)), np.zeros((3, 5)))
    with pytest.raises(ValueError):
        ContourSample(np.zeros((3, 5)), np.zeros((3, 6)))
    with pytest.raises(ValueError):
        ContourSample(np.zeros((3, 5)), np.zeros((3, 5)), EpsGrid(1.0, 6))
    with pytest.raises(ValueError):
        fda.westfall_young_adjust(ContourSample(np.eye(3), np.eye(3)), num_perms=50)


def test_test_curve_csv(tmp_path):
    rng = np.random.default_rng(8)
    grid = EpsGrid(1.0, 5)
    curve = fda.global_test(ContourSample(rng.normal(size=(4, 5)), rng.normal(size=(4, 5)), grid), 100)
    path = tmp_path / "t.csv"
    fda.write_test_curve_csv(path, curve)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# global_stat=") and lines[1].startswith("# global_p=")
    assert lines[2] == "eps,stat,raw_p,adjusted_p"
    assert len(lines) == 8
