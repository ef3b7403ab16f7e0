from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special, stats

from crt_records.crt_sampler import (
    Params,
    joint_density,
    log_joint_density,
    sample_excursion,
    sample_excursion_tree,
    sample_mass_points,
    sample_spanned_tree,
)
from crt_records.errors import DegenerateInputError, InvalidParameterError
from crt_records.randkit import SeedSpec, chi_square_pvalue, derive, ks_critical, ks_statistic, standard_error
from crt_records.tree_core import TreePoint, first_branch_point, graft

P = Params(0.5, 1.0)


def test_params_validation():
    for a, r in [(0, 1), (-1, 1), (1, 0), (math.inf, 1), (math.nan, 1)]:
        with pytest.raises(InvalidParameterError):
            Params(a, r)


def test_single_leaf_length():
    L2 = np.array([sample_spanned_tree(P, 1, derive(1, i)).total_length ** 2 for i in range(4000)])
    assert abs(L2.mean() - P.r / P.alpha) < 3 * standard_error(L2)
    s = sample_spanned_tree(P, 1, derive(1, 0))
    assert s.tree.edge_count == 1
    with pytest.raises(DegenerateInputError):
        s.h_root


def test_sample_rejects_bad_n():
    for n in (0, -3, 2.5):
        with pytest.raises(InvalidParameterError):
            sample_spanned_tree(P, n, 0)


def test_mean_length_over_sqrt_n():
    n = 64
    x = np.array([sample_spanned_tree(P, n, derive(2, i)).total_length for i in range(10_000)]) / math.sqrt(n)
    exact = math.sqrt(P.r / P.alpha) * math.exp(special.gammaln(n + 0.5) - special.gammaln(n)) / math.sqrt(n)
    assert abs(x.mean() - exact) < 3 * standard_error(x)
    # the finite-n mean sits below the limit sqrt(r/alpha) by a factor 1 - 1/(8n) + O(n^-2)
    assert abs(exact / math.sqrt(2.0) - (1 - 1 / (8 * n))) < 1 / n**2


def test_length_squared_is_gamma():
    n = 32
    L2 = np.array([sample_spanned_tree(P, n, derive(3, i)).total_length ** 2 for i in range(10_000)])
    assert ks_statistic(L2, lambda x: stats.gamma.cdf(x, n, scale=P.r / P.alpha)) < 0.0163


@given(st.integers(0, 10**6), st.integers(1, 40))
def test_sample_structure(seed, n):
    s = sample_spanned_tree(P, n, derive(seed, 0))
    t = s.tree
    assert t.n_leaves == n
    assert t.edge_count == 2 * n - 1
    assert t.total_length == pytest.approx(s.eta[-1], rel=1e-12)
    assert np.all(np.diff(s.eta) > 0)
    assert sorted(s.leaf_order) == sorted(t.leaves)
    if n >= 2:
        assert first_branch_point(t)[1] == pytest.approx(s.h_root, rel=1e-12)


@given(st.integers(0, 10**6), st.integers(2, 40))
def test_restriction_is_the_smaller_sample(seed, n):
    big = sample_spanned_tree(P, n, SeedSpec(seed, 1))
    for k in (1, n // 2, n - 1):
        k = max(k, 1)
        small = sample_spanned_tree(P, k, SeedSpec(seed, 1))
        r = big.restrict(k)
        for a in ("eta", "host", "offset", "coins"):
            assert np.array_equal(getattr(r, a), getattr(small, a))
        assert r.tree == small.tree
    hp = big.h_root_prefix()
    assert np.isinf(hp[0])
    assert hp[-1] == big.h_root
    assert np.all(np.diff(hp) <= 0)


@given(st.integers(0, 10**6), st.integers(2, 25))
def test_graft_replay_matches_sticks(seed, n):
    s = sample_spanned_tree(P, n, derive(seed, 0))
    for k in range(2, n + 1):
        prev, cur = s.restrict(k - 1), s.restrict(k)
        stick, off = int(cur.host[-1]), float(cur.offset[-1])
        word, start = next((w, a) for w, (st_, a) in prev.edge_map.items()
                           if st_ == stick and a < off <= a + prev.tree.length(w))
        grown, _, _ = graft(prev.tree, TreePoint(word, off - start), float(cur.stick_length[-1]),
                            left=bool(cur.coins[-1]))
        assert grown.shape() == cur.tree.shape()
        assert np.allclose(grown.lengths, cur.tree.lengths, rtol=1e-12, atol=1e-12)


def test_catalan_shapes():
    counts = Counter(sample_spanned_tree(P, 4, derive(4, i)).tree.shape() for i in range(100_000))
    assert len(counts) == 5
    sd = math.sqrt(0.2 * 0.8 / 100_000)
    for c in counts.values():
        assert abs(c / 100_000 - 0.2) < 3 * sd


def test_joint_density_values():
    assert joint_density(Params(1.0, 1.0), 1, [1.0]) == pytest.approx(2 / math.e)
    assert joint_density(Params(2.0, 2.0), 1, [1.0]) == pytest.approx(2 / math.e)
    with pytest.raises(InvalidParameterError):
        joint_density(P, 2, [1.0, 0.0, 1.0])
    with pytest.raises(InvalidParameterError):
        joint_density(P, 2, [1.0, 1.0])


def test_joint_density_normalization():
    p = Params(1.0, 1.0)
    f = lambda h3, h2, h1: joint_density(p, 2, [h1, h2, h3])
    total, _ = integrate.tplquad(f, 0, 8, 0, 8, 0, 8, epsabs=1e-9, epsrel=1e-7)
    assert total == pytest.approx(1.0, rel=1e-4)


@given(st.lists(st.floats(0.01, 3.0), min_size=5, max_size=5), st.permutations(range(5)))
def test_joint_density_symmetric(h, perm):
    h = np.array(h)
    assert log_joint_density(P, 3, h) == pytest.approx(log_joint_density(P, 3, h[list(perm)]), rel=1e-12)


def test_edge_fractions_are_beta():
    n = 5
    fr_root, fr_leaf = [], []
    for i in range(20_000):
        t = sample_spanned_tree(P, n, derive(5, i)).tree
        fr_root.append(t.lengths[0] / t.total_length)
        fr_leaf.append(t.length(t.leaves[0]) / t.total_length)
    cdf = lambda x: stats.beta.cdf(x, 1, 2 * n - 2)
    bins = np.linspace(0.0, 0.5, 11)
    assert chi_square_pvalue(fr_root, cdf, bins) > 0.01
    assert chi_square_pvalue(fr_leaf, cdf, bins) > 0.01


def test_h_root_two_leaves_matches_density_marginal():
    p = Params(1.0, 1.0)
    # h1 marginal of the n=2 density: integrate out (h2, h3), which only enter through s = h2 + h3
    dens = lambda h1: integrate.quad(lambda s: s * joint_density(p, 2, [h1, s / 2, s / 2]), 0, np.inf)[0]
    grid = np.linspace(1e-12, 4, 201)
    pdf = np.array([dens(x) for x in grid])
    cdf_grid = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2 * np.diff(grid))])
    cdf = lambda x: np.interp(x, grid, cdf_grid)
    h = np.array([sample_spanned_tree(p, 2, derive(6, i)).h_root for i in range(10_000)])
    assert cdf_grid[-1] == pytest.approx(1.0, abs=1e-4)
    assert ks_statistic(h, cdf) < ks_critical(h.size)


def test_excursion_endpoints_and_mass():
    for N in (2, 3, 50):
        et = sample_excursion_tree(Params(0.5, 3.0), N, derive(7, N))
        assert et.heights[0] == 0 and et.heights[-1] == 0
        assert np.all(et.heights >= 0)
        assert et.total_mass == 3.0
        assert et.mass.sum() == pytest.approx(3.0)
    with pytest.raises(InvalidParameterError):
        sample_excursion_tree(P, 1, 0)


def test_excursion_interior_positive():
    e = sample_excursion(1000, derive(8, 0))
    assert np.all(e[1:-1] > 0)


def test_excursion_max_height_bracket():
    m = [sample_excursion_tree(P, 10_000, derive(9, i)).heights.max() for i in range(1000)]
    # max of 2 e (alpha = 1/2) has mean sqrt(2 pi) ln 2 ~ 1.74
    assert 1.5 < np.mean(m) < 3.0


def test_mass_points_are_uniform_steps():
    et = sample_excursion_tree(P, 64, derive(10, 0))
    v = sample_mass_points(et, 200_000, derive(10, 1))
    freq = np.bincount(v, minlength=et.n_vertices) / v.size
    assert np.allclose(freq, et.mass / et.total_mass, atol=0.005)
    assert freq[0] == 0.0
