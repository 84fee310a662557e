"""k-means with k-means++ seeding, and cluster-count selection scores.

All restarts of one clustering run advance together as a batch: the data is
shared, each restart seeds its centroids from its own derived random stream,
and Lloyd iterations run on every unfinished restart at once. The Gap
statistic's reference datasets go through the same batched engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numba import njit

N_INIT = 10
GAP_REFERENCES = 50
GAP_REF_INIT = 3
MAX_ITER = 300


class DegenerateFeatures(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KMeansResult:
    labels: np.ndarray        # 1..k, numbered by first appearance
    centroids: np.ndarray     # k x d, row j-1 for label j
    inertia: float
    history: np.ndarray       # inertia after each assignment step, then the final value
    n_iter: int
    restart: int              # index of the winning restart


def standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero mean, unit variance per column; constant columns are only centred."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise DegenerateFeatures("features must be a non-empty 2-D array")
    if np.all(x == x[0]):
        raise DegenerateFeatures("all feature rows are identical")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (x - mean) / scale, mean, scale


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared distances, shape (B, n, k), for x (B, n, d) and c (B, k, d)."""
    out = np.zeros((x.shape[0], x.shape[1], c.shape[1]))
    for j in range(x.shape[2]):
        out += (x[:, :, j, None] - c[:, None, :, j]) ** 2
    return out


@njit(cache=True)
def _assign(x, c):
    """Nearest centre per point and its squared distance, for each batch member."""
    b, n, d = x.shape
    k = c.shape[1]
    labels = np.empty((b, n), dtype=np.int64)
    best = np.empty((b, n))
    for m in range(b):
        for i in range(n):
            lab = 0
            low = np.inf
            for j in range(k):
                s = 0.0
                for t in range(d):
                    diff = x[m, i, t] - c[m, j, t]
                    s += diff * diff
                if s < low:
                    low = s
                    lab = j
            labels[m, i] = lab
            best[m, i] = low
    return labels, best


def _plus_plus(x: np.ndarray, k: int, rngs: list[np.random.Generator]) -> np.ndarray:
    """k-means++ seeding for each batch member, member b drawing from ``rngs[b]``."""
    b, n, _ = x.shape
    rows = np.arange(b)
    chosen = np.zeros((b, k), dtype=np.int64)
    taken = np.zeros((b, n), dtype=bool)
    first = np.array([g.integers(n) for g in rngs])
    chosen[:, 0] = first
    taken[rows, first] = True
    d2 = ((x - x[rows, first][:, None, :]) ** 2).sum(axis=-1)
    for j in range(1, k):
        u = np.array([g.random() for g in rngs])
        w = np.where(taken, 0.0, d2)
        total = w.sum(axis=1)
        # all remaining points coincide with a centre: pick uniformly among them
        flat = total <= 0
        w[flat] = (~taken[flat]).astype(float)
        total[flat] = w[flat].sum(axis=1)
        cum = np.cumsum(w, axis=1)
        idx = np.minimum((cum < (u * total)[:, None]).sum(axis=1), n - 1)
        idx = np.where(taken[rows, idx], np.argmax(~taken, axis=1), idx)
        chosen[:, j] = idx
        taken[rows, idx] = True
        d2 = np.minimum(d2, ((x - x[rows, idx][:, None, :]) ** 2).sum(axis=-1))
    return x[rows[:, None], chosen]


def _update(x, labels, centers):
    """Centroid update; an empty cluster takes over its member's worst-served point."""
    b, n, d = x.shape
    k = centers.shape[1]
    flat = (labels + k * np.arange(b)[:, None]).ravel()
    counts = np.bincount(flat, minlength=b * k).reshape(b, k)
    sums = np.stack(
        [np.bincount(flat, weights=x[:, :, j].ravel(), minlength=b * k).reshape(b, k) for j in range(d)], axis=-1
    )
    new = np.where(counts[:, :, None] > 0, sums / np.maximum(counts, 1)[:, :, None], centers)
    for m, j in zip(*np.nonzero(counts == 0)):
        d2 = ((x[m] - new[m, labels[m]]) ** 2).sum(axis=1)
        if d2.max() > 0:
            p = int(np.argmax(d2))
            new[m, j] = x[m, p]
            labels[m, p] = j
            new[m] = _member_means(x[m], labels[m], new[m])
    return new


def _member_means(x, labels, centers):
    out = centers.copy()
    for j in range(len(centers)):
        sel = labels == j
        if sel.any():
            out[j] = x[sel].mean(axis=0)
    return out


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int):
    """Batched Lloyd iterations until every member's labels stop changing."""
    b = x.shape[0]
    rows = np.arange(b)
    active = np.ones(b, dtype=bool)
    labels = np.full((b, x.shape[1]), -1, dtype=np.int64)
    history: list[list[float]] = [[] for _ in range(b)]
    n_iter = np.zeros(b, dtype=np.int64)
    for _ in range(max_iter):
        idx = rows[active]
        if len(idx) == 0:
            break
        new_labels, d2 = _assign(np.ascontiguousarray(x[idx]), np.ascontiguousarray(centers[idx]))
        inertia = d2.sum(axis=1)
        for m, v in zip(idx, inertia):
            history[m].append(float(v))
        changed = (new_labels != labels[idx]).any(axis=1)
        labels[idx] = new_labels
        n_iter[idx] += 1
        centers[idx] = _update(x[idx], labels[idx], centers[idx])
        active[idx[~changed]] = False
    final = np.take_along_axis(_sq_dist(x, centers), labels[:, :, None], axis=2)[:, :, 0].sum(axis=1)
    for m in range(b):
        history[m].append(float(final[m]))
    return labels, centers, final, history, n_iter


def _renumber(labels: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    _, first = np.unique(labels, return_index=True)
    order = np.unique(labels)[np.argsort(first)]
    empty = [j for j in range(len(centers)) if j not in set(order.tolist())]
    order = np.concatenate([order, np.array(empty, dtype=np.int64)]).astype(np.int64)
    rank = np.empty(len(centers), dtype=np.int64)
    rank[order] = np.arange(len(centers))
    return rank[labels] + 1, centers[order]


def kmeans(
    x: np.ndarray, k: int, seed: int | np.random.SeedSequence = 0, n_init: int = N_INIT, max_iter: int = MAX_ITER
) -> KMeansResult:
    """Best of ``n_init`` k-means++ restarts; ties go to the lowest restart index."""
    x = np.asarray(x, dtype=float)
    if not 1 <= k <= len(x):
        raise ValueError(f"k={k} outside [1, {len(x)}]")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in ss.spawn(n_init)]
    xb = np.broadcast_to(x, (n_init,) + x.shape)
    centers = _plus_plus(xb, k, rngs)
    labels, centers, inertia, history, n_iter = _lloyd(xb, centers, max_iter)
    best = int(np.argmin(inertia))
    lab, cen = _renumber(labels[best], centers[best])
    return KMeansResult(lab, cen, float(inertia[best]), np.array(history[best]), int(n_iter[best]), best)


def batch_inertia(x: np.ndarray, k: int, ss: np.random.SeedSequence, n_init: int, max_iter: int = MAX_ITER):
    """Best k-means inertia for each dataset in ``x`` (shape (B, n, d))."""
    b = x.shape[0]
    rngs = [np.random.default_rng(s) for s in ss.spawn(b * n_init)]
    xb = np.repeat(x, n_init, axis=0)
    centers = _plus_plus(xb, k, rngs)
    _, _, inertia, _, _ = _lloyd(xb, centers, max_iter)
    return inertia.reshape(b, n_init).min(axis=1)


def _check_labels(x, labels):
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if not 2 <= len(uniq) <= len(x) - 1:
        raise ValueError(f"need 2..n-1 clusters, got {len(uniq)}")
    return uniq


def davies_bouldin(x: np.ndarray, labels: np.ndarray) -> float:
    """Mean over clusters of the worst (s_i + s_j) / |c_i - c_j| ratio; lower is better."""
    x = np.asarray(x, dtype=float)
    uniq = _check_labels(x, labels)
    cents = np.array([x[labels == u].mean(axis=0) for u in uniq])
    spread = np.array([np.linalg.norm(x[labels == u] - c, axis=1).mean() for u, c in zip(uniq, cents)])
    sep = np.linalg.norm(cents[:, None, :] - cents[None, :, :], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (spread[:, None] + spread[None, :]) / sep
    np.fill_diagonal(ratio, -np.inf)
    ratio = np.where(np.isnan(ratio), 0.0, ratio)
    return float(ratio.max(axis=1).mean())


def calinski_harabasz(x: np.ndarray, labels: np.ndarray) -> float:
    """Between- over within-cluster dispersion, each per degree of freedom; higher is better."""
    x = np.asarray(x, dtype=float)
    uniq = _check_labels(x, labels)
    n, k = len(x), len(uniq)
    centre = x.mean(axis=0)
    between = within = 0.0
    for u in uniq:
        pts = x[labels == u]
        c = pts.mean(axis=0)
        between += len(pts) * np.sum((c - centre) ** 2)
        within += np.sum((pts - c) ** 2)
    if within == 0:
        return float("inf")
    return float(between * (n - k) / (within * (k - 1)))


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    k: int
    labels: np.ndarray
    centroids: np.ndarray          # in the clustered (standardized unless disabled) units
    inertia: float
    scores: pd.DataFrame           # index k; db, ch, gap, gap_se, inertia
    best: dict[str, int]           # per-criterion choice
    standardized: bool = True
    mean: np.ndarray = field(default=None, repr=False)
    scale: np.ndarray = field(default=None, repr=False)
    runs: dict = field(default_factory=dict, repr=False)   # k -> KMeansResult


def gap_choice(scores: pd.DataFrame) -> int:
    """Smallest k with Gap(k) >= Gap(k+1) - s(k+1); the largest Gap if none qualifies."""
    ks = list(scores.index)
    for a, b in zip(ks[:-1], ks[1:]):
        if b == a + 1 and scores.at[a, "gap"] >= scores.at[b, "gap"] - scores.at[b, "gap_se"]:
            return int(a)
    return int(scores["gap"].idxmax())


def kmeans_select(
    features,
    k_range=range(2, 21),
    seed: int = 0,
    standardize_features: bool = True,
    n_init: int = N_INIT,
    references: int = GAP_REFERENCES,
    ref_init: int = GAP_REF_INIT,
) -> ClusteringResult:
    """Cluster for every k in ``k_range`` and score each with DB, CH and Gap.

    The reported ``k`` is the median of the three per-criterion choices, which
    is the majority choice whenever two criteria agree.
    """
    x = np.asarray(features, dtype=float)
    n = len(x)
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 2 or ks[-1] > n - 1:
        raise ValueError(f"k_range must lie within [2, {n - 1}]")
    if standardize_features:
        z, mean, scale = standardize(x)
    else:
        if np.all(x == x[0]):
            raise DegenerateFeatures("all feature rows are identical")
        z, mean, scale = x, np.zeros(x.shape[1]), np.ones(x.shape[1])

    root = np.random.SeedSequence(seed)
    fit_ss, ref_ss, ref_fit_ss = root.spawn(3)
    lo, hi = z.min(axis=0), z.max(axis=0)
    ref = lo + (hi - lo) * np.random.default_rng(ref_ss).random((references, n, z.shape[1]))

    runs, rows = {}, []
    for k, fss, rss in zip(ks, fit_ss.spawn(len(ks)), ref_fit_ss.spawn(len(ks))):
        res = kmeans(z, k, fss, n_init=n_init)
        runs[k] = res
        log_w = np.log(res.inertia) if res.inertia > 0 else -np.inf
        ref_log = np.log(batch_inertia(ref, k, rss, ref_init))
        rows.append({
            "k": k,
            "db": davies_bouldin(z, res.labels),
            "ch": calinski_harabasz(z, res.labels),
            "gap": float(ref_log.mean() - log_w),
            "gap_se": float(ref_log.std() * np.sqrt(1.0 + 1.0 / references)),
            "inertia": res.inertia,
        })
    scores = pd.DataFrame(rows).set_index("k")
    best = {
        "db": int(scores["db"].idxmin()),
        "ch": int(scores["ch"].idxmax()),
        "gap": gap_choice(scores),
    }
    k = int(np.median(list(best.values())))
    run = runs[k]
    return ClusteringResult(k, run.labels, run.centroids, run.inertia, scores, best,
                            standardize_features, mean, scale, runs)
