"""Degree-preserving randomization and the L_k similarity ratio between classes.

Replica ``r`` of a plan draws its random stream from
``SeedSequence(seed, spawn_key=(r,))``, so replicas can run in any order or in
parallel and still reproduce bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ._swap import double_edge_swap
from .consumption import SpendingVectors
from .model import SocialGraph


@dataclass(frozen=True)
class SwapPlan:
    swap_multiplier: int = 5
    replicas: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.swap_multiplier < 1:
            raise ValueError("swap_multiplier must be >= 1")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")

    def rng(self, replica_index: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(replica_index,))
        return np.random.default_rng(ss)


def swap_edges(edges: np.ndarray, n_nodes: int, plan: SwapPlan, replica_index: int) -> tuple[np.ndarray, int]:
    """Randomize a copy of an ``(m, 2)`` edge array; returns (edges, accepted swaps).

    ``swap_multiplier * m`` swaps are attempted; rejected attempts count.
    """
    out = np.array(edges, dtype=np.int64, copy=True).reshape(-1, 2)
    m = len(out)
    if m < 2:
        return out, 0
    attempts = plan.swap_multiplier * m
    rng = plan.rng(replica_index)
    first = rng.integers(0, m, size=attempts)
    second = rng.integers(0, m, size=attempts)
    flip = rng.integers(0, 2, size=attempts).astype(np.bool_)
    accepted = double_edge_swap(out, n_nodes, first, second, flip)
    return out, int(accepted)


def edge_swap_randomize(g: SocialGraph, plan: SwapPlan, replica_index: int = 0) -> SocialGraph:
    edges, _ = swap_edges(g.edges, g.n_nodes, plan, replica_index)
    return SocialGraph(g.nodes, edges)


@dataclass(frozen=True, eq=False)
class ClassPairDiff:
    """d^k(s_i, s_j) per column k; NaN where the class pair has no edge."""

    d: np.ndarray        # K x n x n
    counts: np.ndarray   # n x n edge counts

    @property
    def undefined(self) -> np.ndarray:
        return self.counts == 0


def _pair_diff(u, v, values, labels, n):
    a = np.minimum(labels[u], labels[v])
    b = np.maximum(labels[u], labels[v])
    pair = a * n + b
    diff = np.abs(values[u] - values[v])
    counts = np.bincount(pair, minlength=n * n).reshape(n, n)
    counts = counts + np.triu(counts, 1).T
    d = np.empty((values.shape[1], n, n))
    for k in range(values.shape[1]):
        s = np.bincount(pair, weights=diff[:, k], minlength=n * n).reshape(n, n)
        s = s + np.triu(s, 1).T
        with np.errstate(invalid="ignore", divide="ignore"):
            d[k] = np.where(counts > 0, s / np.maximum(counts, 1), np.nan)
    return d, counts


def _node_arrays(g: SocialGraph, vectors: SpendingVectors, classes: pd.Series):
    vec = vectors.reindex(g.nodes)
    labels = classes.reindex(list(g.nodes))
    if labels.isna().any():
        raise ValueError("graph node without a class")
    values = np.column_stack([vec.matrix, vec.cash_share])
    return values, labels.to_numpy(dtype=np.int64) - 1, vec.groups


def class_pair_diff(g: SocialGraph, vectors: SpendingVectors, classes: pd.Series, n: int) -> ClassPairDiff:
    """Average |SV_k(u) - SV_k(v)| over edges joining classes (s_i, s_j).

    The last of the K+1 layers is the cash share SV_1.
    """
    values, labels, _ = _node_arrays(g, vectors, classes)
    d, counts = _pair_diff(g.edges[:, 0], g.edges[:, 1], values, labels, n)
    return ClassPairDiff(d, counts)


@dataclass(frozen=True, eq=False)
class LRatioResult:
    groups: tuple[str, ...]
    observed: ClassPairDiff
    null_d: np.ndarray          # R x (K+1) x n x n per-replica null differences
    null_counts: np.ndarray     # R x n x n
    accepted_swaps: np.ndarray  # R
    l_k: np.ndarray             # K x n x n
    l_sv: np.ndarray            # n x n
    l_k1: np.ndarray            # n x n
    l_sv_se: np.ndarray         # n x n null standard error of L_SV
    l_k1_se: np.ndarray
    null_mean: np.ndarray       # (K+1) x n x n
    replicas_defined: np.ndarray  # n x n

    @property
    def replicas(self) -> int:
        return self.null_d.shape[0]


def _nanmean(x, axis):
    with np.errstate(invalid="ignore", divide="ignore"):
        cnt = np.sum(~np.isnan(x), axis=axis)
        s = np.nansum(x, axis=axis)
        return np.where(cnt > 0, s / np.maximum(cnt, 1), np.nan), cnt


def _ratio(num, den):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def l_ratio(
    g: SocialGraph,
    vectors: SpendingVectors,
    classes: pd.Series,
    n: int,
    plan: SwapPlan = SwapPlan(),
    n_jobs: int = 1,
) -> LRatioResult:
    """Observed class-pair differences over their degree-preserving null average.

    ``L_SV`` averages ``L_k`` over the vector's groups (undefined ``L_k``
    skipped); ``L_k1`` is the same ratio for the cash share. The null standard
    error of ``L_SV`` is the spread of the per-replica ratios,
    ``std(L_SV^(r)) * sqrt(1 + 1/R)``, i.e. the expected deviation of one
    observed graph from the replica mean.
    """
    values, labels, groups = _node_arrays(g, vectors, classes)
    u, v = g.edges[:, 0], g.edges[:, 1]
    obs_d, obs_counts = _pair_diff(u, v, values, labels, n)

    def replica(r):
        edges, accepted = swap_edges(g.edges, g.n_nodes, plan, r)
        d, counts = _pair_diff(edges[:, 0], edges[:, 1], values, labels, n)
        return d, counts, accepted

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(replica, range(plan.replicas)))
    else:
        results = [replica(r) for r in range(plan.replicas)]
    null_d = np.stack([r[0] for r in results])
    null_counts = np.stack([r[1] for r in results])
    accepted = np.array([r[2] for r in results], dtype=np.int64)

    null_mean, defined = _nanmean(null_d, axis=0)
    defined = defined.min(axis=0)
    ratios = _ratio(obs_d, null_mean)
    k = len(groups)
    l_k = ratios[:k]
    l_sv, _ = _nanmean(l_k, axis=0)
    l_k1 = ratios[k]

    per_rep = _ratio(null_d, null_mean[None])
    rep_sv, _ = _nanmean(per_rep[:, :k], axis=1)
    rep_k1 = per_rep[:, k]
    l_sv_se = _null_se(rep_sv)
    l_k1_se = _null_se(rep_k1)

    return LRatioResult(
        groups=groups,
        observed=ClassPairDiff(obs_d, obs_counts),
        null_d=null_d,
        null_counts=null_counts,
        accepted_swaps=accepted,
        l_k=l_k,
        l_sv=l_sv,
        l_k1=l_k1,
        l_sv_se=l_sv_se,
        l_k1_se=l_k1_se,
        null_mean=null_mean,
        replicas_defined=defined,
    )


def _null_se(per_replica: np.ndarray) -> np.ndarray:
    cnt = np.sum(~np.isnan(per_replica), axis=0)
    mean, _ = _nanmean(per_replica, axis=0)
    dev = np.where(np.isnan(per_replica), 0.0, per_replica - mean[None])
    with np.errstate(invalid="ignore", divide="ignore"):
        sd = np.sqrt(np.sum(dev**2, axis=0) / (cnt - 1))
        se = sd * np.sqrt(1.0 + 1.0 / cnt)
    return np.where(cnt > 1, se, np.nan)


def degree_preserved(before: SocialGraph, after: SocialGraph) -> bool:
    return before.nodes == after.nodes and np.array_equal(before.degrees(), after.degrees())


def edge_overlap(a: SocialGraph, b: SocialGraph) -> float:
    """Fraction of ``a``'s edges also present in ``b`` (same node set)."""
    if a.n_edges == 0:
        return math.nan
    n = a.n_nodes
    ka = a.edges[:, 0] * n + a.edges[:, 1]
    kb = b.edges[:, 0] * n + b.edges[:, 1]
    return float(np.isin(ka, kb).mean())
