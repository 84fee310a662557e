import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from spendnet.consumption import SpendingVectors
from spendnet.model import SocialGraph
from spendnet.nullmodel import (
    SwapPlan,
    class_pair_diff,
    degree_preserved,
    edge_overlap,
    edge_swap_randomize,
    l_ratio,
    swap_edges,
)


def random_graph(n, m, seed):
    rng = np.random.default_rng(seed)
    pairs = set()
    while len(pairs) < m:
        a, b = rng.integers(0, n, size=2)
        if a != b:
            pairs.add((min(a, b), max(a, b)))
    nodes = [f"n{i:05d}" for i in range(n)]
    return SocialGraph.from_index_pairs(nodes, np.array(sorted(pairs)))


def vectors_for(g, matrix, cash=None):
    matrix = np.asarray(matrix, dtype=float)
    cash = np.zeros(len(matrix)) if cash is None else np.asarray(cash, dtype=float)
    return SpendingVectors(np.array(g.nodes, dtype=object), tuple(f"g{i}" for i in range(matrix.shape[1])),
                           matrix, "excluding_cash", cash)


def is_simple(g):
    e = g.edges
    return (e[:, 0] != e[:, 1]).all() and len(np.unique(e, axis=0)) == len(e)


# randomization

def test_star_cannot_be_swapped():
    g = SocialGraph.from_pairs("abcd", [("a", "b"), ("a", "c"), ("a", "d")])
    out = edge_swap_randomize(g, SwapPlan(seed=3))
    assert out.edge_ids() == g.edge_ids()


def test_four_cycle_keeps_degrees():
    g = SocialGraph.from_pairs("ABCD", [("A", "B"), ("B", "C"), ("C", "D"), ("A", "D")])
    for r in range(20):
        out = edge_swap_randomize(g, SwapPlan(seed=1), r)
        assert out.degrees().tolist() == [2, 2, 2, 2] and is_simple(out)


def test_rejected_attempts_count_towards_the_budget():
    g = SocialGraph.from_pairs("abcd", [("a", "b"), ("a", "c"), ("a", "d")])
    _, accepted = swap_edges(g.edges, g.n_nodes, SwapPlan(swap_multiplier=5), 0)
    assert accepted == 0


@given(
    st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), min_size=2, max_size=40),
    st.integers(0, 2**32 - 1),
)
def test_swaps_preserve_degrees_and_simplicity(pairs, seed):
    nodes = [f"v{i:02d}" for i in range(12)]
    g = SocialGraph.from_index_pairs(nodes, np.array(pairs))
    out = edge_swap_randomize(g, SwapPlan(seed=seed))
    assert degree_preserved(g, out) and is_simple(out) and out.n_edges == g.n_edges


def test_replicas_deterministic_and_distinct():
    g = random_graph(500, 2000, 0)
    plan = SwapPlan(seed=9)
    a = edge_swap_randomize(g, plan, 4)
    b = edge_swap_randomize(g, plan, 4)
    c = edge_swap_randomize(g, plan, 5)
    assert np.array_equal(a.edges, b.edges) and not np.array_equal(a.edges, c.edges)


def test_large_graph_overlap_after_swaps():
    g = random_graph(10_000, 50_000, 1)
    overlaps = []
    for seed in range(20):
        out = edge_swap_randomize(g, SwapPlan(seed=seed))
        assert degree_preserved(g, out)
        overlaps.append(edge_overlap(g, out))
    # measured: about 0.1% of edges survive 5|E| attempts
    assert max(overlaps) < 0.30


# class-pair differences

def test_identical_vectors_give_zero_difference():
    g = random_graph(30, 60, 2)
    v = vectors_for(g, np.tile([0.3, 0.7], (30, 1)))
    classes = pd.Series(np.arange(30) % 3 + 1, index=g.nodes)
    d = class_pair_diff(g, v, classes, 3)
    assert np.nan_to_num(d.d).max() == 0.0


def test_single_opposite_edge():
    g = SocialGraph.from_pairs("uv", [("u", "v")])
    d = class_pair_diff(g, vectors_for(g, [[1, 0], [0, 1]]), pd.Series({"u": 1, "v": 2}), 2)
    assert d.d[0, 0, 1] == d.d[1, 0, 1] == d.d[0, 1, 0] == 1.0
    assert np.isnan(d.d[0, 0, 0]) and d.counts[0, 0] == 0


def test_pair_diff_matches_edge_enumeration():
    rng = np.random.default_rng(5)
    g = random_graph(200, 800, 5)
    m = rng.dirichlet(np.ones(4), size=200)
    cash = rng.random(200)
    classes = pd.Series(rng.integers(1, 5, size=200), index=g.nodes)
    d = class_pair_diff(g, vectors_for(g, m, cash), classes, 4)
    values = np.column_stack([m, cash])
    sums = np.zeros((5, 4, 4))
    counts = np.zeros((4, 4))
    for a, b in g.edges:
        i, j = classes.iloc[a] - 1, classes.iloc[b] - 1
        diff = np.abs(values[a] - values[b])
        sums[:, i, j] += diff
        counts[i, j] += 1
        if i != j:
            sums[:, j, i] += diff
            counts[j, i] += 1
    with np.errstate(invalid="ignore"):
        oracle = sums / counts
    assert np.array_equal(np.isnan(oracle), np.isnan(d.d))
    assert np.nanmax(np.abs(oracle - d.d)) < 1e-12
    assert np.array_equal(counts, d.counts)


# L ratio

def test_numerator_independent_of_replica_count():
    g = random_graph(300, 1200, 6)
    rng = np.random.default_rng(6)
    v = vectors_for(g, rng.dirichlet(np.ones(3), size=300), rng.random(300))
    classes = pd.Series(rng.integers(1, 4, size=300), index=g.nodes)
    one = l_ratio(g, v, classes, 3, SwapPlan(replicas=1, seed=2))
    many = l_ratio(g, v, classes, 3, SwapPlan(replicas=100, seed=2))
    assert np.array_equal(one.observed.d, many.observed.d, equal_nan=True)
    assert np.isnan(one.l_sv_se).all() and np.isfinite(many.l_sv_se).all()


def test_randomization_leaves_ego_attributes_alone():
    g = random_graph(300, 1200, 7)
    rng = np.random.default_rng(7)
    m = rng.dirichlet(np.ones(3), size=300)
    v = vectors_for(g, m.copy())
    classes = pd.Series(rng.integers(1, 4, size=300), index=g.nodes)
    before = classes.copy()
    l_ratio(g, v, classes, 3, SwapPlan(replicas=5))
    assert np.array_equal(v.matrix, m) and classes.equals(before)


def test_threads_give_identical_results():
    g = random_graph(300, 1200, 8)
    rng = np.random.default_rng(8)
    v = vectors_for(g, rng.dirichlet(np.ones(3), size=300), rng.random(300))
    classes = pd.Series(rng.integers(1, 4, size=300), index=g.nodes)
    a = l_ratio(g, v, classes, 3, SwapPlan(replicas=8, seed=1), n_jobs=1)
    b = l_ratio(g, v, classes, 3, SwapPlan(replicas=8, seed=1), n_jobs=4)
    assert np.array_equal(a.l_sv, b.l_sv, equal_nan=True) and np.array_equal(a.null_d, b.null_d, equal_nan=True)


def test_undefined_pairs_are_nan_not_zero():
    g = SocialGraph.from_pairs("abcd", [("a", "b"), ("c", "d")])
    v = vectors_for(g, [[1, 0], [0, 1], [1, 0], [0, 1]])
    classes = pd.Series({"a": 1, "b": 1, "c": 2, "d": 2})
    r = l_ratio(g, v, classes, 2, SwapPlan(replicas=3))
    assert np.isnan(r.l_sv[0, 1])
    assert (r.l_sv[np.isfinite(r.l_sv)] > 0).all()


@pytest.mark.parametrize("seed", range(20))
def test_topology_independent_vectors_sit_near_one(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_graph(2000, 8000, seed)
    v = vectors_for(g, rng.dirichlet(np.ones(5), size=2000), rng.random(2000))
    classes = pd.Series(rng.integers(1, 5, size=2000), index=g.nodes)
    r = l_ratio(g, v, classes, 4, SwapPlan(replicas=40, seed=seed))
    z = np.abs(r.l_sv - 1) / r.l_sv_se
    assert np.all(z[np.isfinite(z)] <= 4)


def test_null_standard_error_is_calibrated():
    """With no topology signal, (L_SV - 1) / SE behaves like a unit-variance score."""
    z = []
    for seed in range(20):
        rng = np.random.default_rng(500 + seed)
        g = random_graph(2000, 8000, 50 + seed)
        v = vectors_for(g, rng.dirichlet(np.ones(8), size=2000), rng.random(2000))
        classes = pd.Series(rng.integers(1, 5, size=2000), index=g.nodes)
        r = l_ratio(g, v, classes, 4, SwapPlan(replicas=60, seed=seed))
        iu = np.triu_indices(4)
        z.append(((r.l_sv - 1) / r.l_sv_se)[iu])
    z = np.concatenate(z)
    assert abs(z.mean()) < 0.25
    assert 0.8 < z.std() < 1.2
