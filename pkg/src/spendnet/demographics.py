"""Average feature sets (AFS) of merchant categories and feature correlations.

For a category c and a feature v, purchasers are grouped by their value of v;
each distinct value is weighted by the mean purchase fraction r(c, u) of its
group, and the category's average is the weighted mean of the distinct values.
With equal r across purchasers this reduces to the plain mean over distinct
values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import sparse, stats

from .categories import PurchaseDistributions
from .model import require

log = logging.getLogger(__name__)

FEATURES = ("age", "gender", "seg")


@dataclass(frozen=True, eq=False)
class CategoryFeatureSet:
    """Per-category averages; ``table`` has index ``mcc`` (or community) and
    columns age, gender, seg, n_purchasers."""

    table: pd.DataFrame
    flagged: tuple = ()

    def check(self, n_classes: int) -> None:
        g = self.table["gender"].dropna()
        require(((g >= 0) & (g <= 1)).all(), "<gender> within [0, 1]")
        s = self.table["seg"].dropna()
        require(((s >= 1) & (s <= n_classes)).all(), "<SEG> within [1, n_classes]")
        require((self.table["n_purchasers"] > 0).all(), "categories with no purchasers excluded")


def _ego_features(egos, profiles: pd.DataFrame, classes: pd.Series) -> pd.DataFrame:
    idx = pd.Index(egos)
    feats = pd.DataFrame({
        "age": profiles["age"].reindex(idx).to_numpy(dtype=float),
        "gender": profiles["gender"].reindex(idx).to_numpy(dtype=float),
        "seg": classes.reindex(idx).to_numpy(dtype=float),
    })
    return feats


def weighted_feature_mean(columns: np.ndarray, r: np.ndarray, values: np.ndarray, n_cols: int) -> np.ndarray:
    """Value-group weighted mean of ``values`` per column.

    ``columns``/``r``/``values`` are aligned purchase records (one per
    purchaser and column). Records with NaN value are ignored.
    """
    ok = ~np.isnan(values)
    df = pd.DataFrame({"c": columns[ok], "v": values[ok], "r": r[ok]})
    alpha = df.groupby(["c", "v"], sort=True)["r"].mean().reset_index()
    alpha["rv"] = alpha["r"] * alpha["v"]
    per = alpha.groupby("c")[["rv", "r"]].sum()
    out = np.full(n_cols, np.nan)
    out[per.index.to_numpy()] = (per["rv"] / per["r"]).to_numpy()
    return out


def _afs_from_matrix(r: sparse.csr_matrix, labels, egos, profiles, classes) -> CategoryFeatureSet:
    coo = r.tocoo()
    keep = coo.data > 0
    rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
    feats = _ego_features(egos, profiles, classes)
    # an integer-year age and a class are required of every purchaser
    valid = ~(np.isnan(feats["age"].to_numpy()) | np.isnan(feats["seg"].to_numpy()))
    ok = valid[rows]
    if not ok.all():
        log.warning("%d purchase records without age or class ignored", int((~ok).sum()))
    rows, cols, vals = rows[ok], cols[ok], vals[ok]
    n_cols = r.shape[1]
    age = np.floor(feats["age"].to_numpy()[rows])
    table = pd.DataFrame({
        "age": weighted_feature_mean(cols, vals, age, n_cols),
        "gender": weighted_feature_mean(cols, vals, feats["gender"].to_numpy()[rows], n_cols),
        "seg": weighted_feature_mean(cols, vals, feats["seg"].to_numpy()[rows], n_cols),
        "n_purchasers": np.bincount(cols, minlength=n_cols),
    }, index=pd.Index(labels, name="mcc"))
    empty = table["n_purchasers"] == 0
    flagged = tuple(table.index[empty].tolist())
    for c in flagged:
        log.warning("category %s has no purchasers with a valid profile; excluded", c)
    return CategoryFeatureSet(table[~empty].copy(), flagged)


def afs(dist: PurchaseDistributions, profiles: pd.DataFrame, classes: pd.Series) -> CategoryFeatureSet:
    """Average age, gender (0 female, 1 male) and class of each category's purchasers."""
    return _afs_from_matrix(dist.r, dist.mccs, dist.egos, profiles, classes)


def community_afs(
    dist: PurchaseDistributions, communities: dict[int, int], profiles: pd.DataFrame, classes: pd.Series
) -> CategoryFeatureSet:
    """AFS of each community, pooling its categories' purchase fractions per ego."""
    labels = sorted(set(communities.values()))
    pos = {c: i for i, c in enumerate(labels)}
    col = np.searchsorted(dist.mccs, np.array(list(communities), dtype=np.int64))
    if np.any(col >= len(dist.mccs)) or np.any(dist.mccs[np.minimum(col, len(dist.mccs) - 1)] != list(communities)):
        raise KeyError("community member not among the distribution's categories")
    member = sparse.csr_matrix(
        (np.ones(len(col)), (col, [pos[c] for c in communities.values()])), shape=(len(dist.mccs), len(labels))
    )
    pooled = (dist.r @ member).tocsr()
    out = _afs_from_matrix(pooled, labels, dist.egos, profiles, classes)
    out.table.index.name = "community"
    return out


@dataclass(frozen=True)
class PearsonResult:
    r: float
    p: float
    n: int
    defined: bool = True


def pearson(x, y) -> PearsonResult:
    """Product-moment correlation with a two-sided t-distribution p-value.

    Zero variance in either argument gives an undefined (NaN) result.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(np.dot(dx, dx)), float(np.dot(dy, dy))
    if sxx == 0 or syy == 0:
        log.warning("pearson: zero variance, coefficient undefined")
        return PearsonResult(math.nan, math.nan, n, defined=False)
    r = float(np.dot(dx, dy) / math.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return PearsonResult(r, 0.0, n)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = float(2.0 * stats.t.sf(abs(t), n - 2))
    return PearsonResult(r, p, n)


def feature_correlations(features: pd.DataFrame) -> pd.DataFrame:
    """Pearson r and p for every feature pair of an AFS table."""
    rows = []
    cols = [c for c in FEATURES if c in features.columns]
    for i, a in enumerate(cols):
        for b in cols[i + 1 :]:
            sub = features[[a, b]].dropna()
            res = pearson(sub[a], sub[b]) if len(sub) >= 3 else PearsonResult(math.nan, math.nan, len(sub), False)
            rows.append({"x": a, "y": b, "r": res.r, "p": res.p, "n": res.n})
    return pd.DataFrame(rows, columns=["x", "y", "r", "p", "n"])
