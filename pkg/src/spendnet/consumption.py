"""Class-level spending shares, spending vectors, distances, dispersion and entropy."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .taxonomy import CategoryTaxonomy
from .model import require

log = logging.getLogger(__name__)

VARIANTS = ("excluding_cash", "including_cash")
MINOR_GROUP_SHARE = 0.003


def group_totals(ledger: pd.DataFrame, taxonomy: CategoryTaxonomy) -> pd.DataFrame:
    """Ego x group spending in cents. Unknown or ungrouped mccs are dropped."""
    pcg = ledger["mcc"].map(taxonomy.group_map())
    known = pcg.notna()
    table = (
        pd.DataFrame({"ego_id": ledger["ego_id"][known], "pcg": pcg[known], "cents": ledger["cents"][known]})
        .groupby(["ego_id", "pcg"], sort=True)["cents"]
        .sum()
        .unstack(fill_value=0)
    )
    return table.reindex(columns=sorted(table.columns)).astype(np.int64)


def minor_groups(totals: pd.DataFrame, threshold: float = MINOR_GROUP_SHARE) -> list[str]:
    """Smallest groups whose combined share of all spending stays below ``threshold``."""
    per_group = sorted(totals.sum(axis=0).items(), key=lambda kv: (kv[1], kv[0]))
    grand = sum(v for _, v in per_group)
    if grand <= 0:
        return []
    out, running = [], 0
    for name, cents in per_group:
        running += cents
        if running >= threshold * grand:
            break
        out.append(name)
    return sorted(out)


@dataclass(frozen=True, eq=False)
class GroupSpendingMatrix:
    """r(k, s_j): share of group k spending made by class j; rows sum to 1."""

    shares: pd.DataFrame          # index group, columns class 1..n
    group_totals: pd.Series       # cents per group, all groups
    flagged: tuple[str, ...]      # minor groups recommended for exclusion
    omitted: tuple[str, ...]      # groups with zero spending

    def retained(self) -> list[str]:
        return [g for g in self.shares.index if g not in self.flagged]

    def check(self) -> None:
        sums = self.shares.sum(axis=1).to_numpy()
        require(np.allclose(sums, 1.0, rtol=0, atol=1e-9), "r(k, s_j) rows sum to 1")


def group_spending_shares(
    ledger: pd.DataFrame,
    classes: pd.Series,
    taxonomy: CategoryTaxonomy,
    n_classes: int | None = None,
    threshold: float = MINOR_GROUP_SHARE,
) -> GroupSpendingMatrix:
    totals = group_totals(ledger, taxonomy)
    missing = totals.index.difference(classes.index)
    if len(missing):
        raise ValueError(f"{len(missing)} egos in ledger without a class, e.g. {missing[0]}")
    n = int(n_classes or classes.max())
    by_class = totals.groupby(classes.reindex(totals.index).to_numpy()).sum()
    by_class = by_class.reindex(range(1, n + 1), fill_value=0).T
    group_sum = by_class.sum(axis=1)
    omitted = tuple(group_sum.index[group_sum == 0])
    for g in omitted:
        log.warning("group %s has no spending; row omitted", g)
    nz = by_class[group_sum > 0]
    shares = nz.div(nz.sum(axis=1), axis=0).astype(float)
    shares.index.name = "pcg"
    shares.columns.name = "class"
    return GroupSpendingMatrix(
        shares=shares,
        group_totals=group_sum,
        flagged=tuple(minor_groups(totals, threshold)),
        omitted=omitted,
    )


@dataclass(frozen=True, eq=False)
class SpendingVectors:
    """Per-ego spending fractions over a fixed group index set.

    ``cash_share`` is always cash / (retained groups including cash).
    """

    egos: np.ndarray
    groups: tuple[str, ...]
    matrix: np.ndarray
    variant: str
    cash_share: np.ndarray
    excluded: int = 0

    def __len__(self):
        return len(self.egos)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.matrix, index=pd.Index(self.egos, name="ego_id"), columns=list(self.groups))

    def reindex(self, egos) -> "SpendingVectors":
        pos = pd.Index(self.egos).get_indexer(list(egos))
        if (pos < 0).any():
            raise KeyError("ego without a spending vector")
        return SpendingVectors(
            np.asarray(egos, dtype=object), self.groups, self.matrix[pos], self.variant, self.cash_share[pos]
        )

    def check(self) -> None:
        require(np.all((self.matrix >= 0) & (self.matrix <= 1)), "SV components in [0, 1]")
        require(np.allclose(self.matrix.sum(axis=1), 1.0, rtol=0, atol=1e-9), "SV sums to 1")


def spending_vectors(
    ledger: pd.DataFrame,
    taxonomy: CategoryTaxonomy,
    variant: str = "excluding_cash",
    groups: list[str] | None = None,
) -> SpendingVectors:
    """Spending vectors over ``groups`` (the retained K_17 set, cash included).

    ``excluding_cash`` normalizes over the non-cash groups only;
    ``including_cash`` over all of ``groups``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    totals = group_totals(ledger, taxonomy)
    cash = taxonomy.cash_group
    if groups is None:
        groups = list(totals.columns)
    groups = sorted(set(groups) | {cash})
    totals = totals.reindex(columns=groups, fill_value=0)
    k17 = totals.to_numpy(dtype=np.int64)
    k17_sum = k17.sum(axis=1)
    cash_col = groups.index(cash)
    if variant == "excluding_cash":
        index_set = [g for g in groups if g != cash]
    else:
        index_set = groups
    sub = totals[index_set].to_numpy(dtype=np.int64)
    in_scope = sub.sum(axis=1)
    ok = in_scope > 0
    matrix = sub[ok] / in_scope[ok, None]
    cash_share = k17[ok, cash_col] / k17_sum[ok]
    return SpendingVectors(
        egos=totals.index[ok].to_numpy(dtype=object),
        groups=tuple(index_set),
        matrix=matrix,
        variant=variant,
        cash_share=cash_share,
        excluded=int((~ok).sum()),
    )


def _class_index(vectors: SpendingVectors, classes: pd.Series) -> np.ndarray:
    labels = classes.reindex(vectors.egos)
    if labels.isna().any():
        raise ValueError("ego with a spending vector but no class")
    return labels.to_numpy(dtype=np.int64)


def class_means(values: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    """Mean row per class 1..n; NaN rows for empty classes. Works on 1-D input too."""
    values = np.asarray(values, dtype=float)
    flat = values.ndim == 1
    v = values[:, None] if flat else values
    sums = np.zeros((n, v.shape[1]))
    np.add.at(sums, labels - 1, v)
    sizes = np.bincount(labels - 1, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / sizes[:, None]
    means[sizes == 0] = np.nan
    return means[:, 0] if flat else means


def class_distance_matrix(means: np.ndarray) -> np.ndarray:
    """Euclidean distances between class mean vectors (absolute difference for scalars)."""
    m = np.asarray(means, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    n = len(m)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = np.sqrt(np.sum((m[i] - m[j]) ** 2))
    return d


def class_dispersion(values: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    """Mean Euclidean distance of member vectors to their class mean."""
    values = np.asarray(values, dtype=float)
    v = values[:, None] if values.ndim == 1 else values
    means = class_means(v, labels, n)
    dist = np.sqrt(np.sum((v - means[labels - 1]) ** 2, axis=1))
    return class_means(dist, labels, n)


def class_entropy(means: np.ndarray) -> np.ndarray:
    """Shannon entropy (natural log) of each class mean vector, 0 ln 0 = 0."""
    m = np.atleast_2d(np.asarray(means, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(m > 0, -m * np.log(np.where(m > 0, m, 1.0)), 0.0)
    out = terms.sum(axis=1)
    out[np.isnan(m).any(axis=1)] = np.nan
    return out


@dataclass(frozen=True, eq=False)
class ClassVectorStats:
    variant: str
    groups: tuple[str, ...]
    sizes: np.ndarray
    means: np.ndarray        # n x K
    dispersion: np.ndarray   # n
    entropy: np.ndarray      # n
    cash_mean: np.ndarray    # n, class mean of SV_1
    cash_dispersion: np.ndarray

    def check(self) -> None:
        ok = self.sizes > 0
        require(np.allclose(self.means[ok].sum(axis=1), 1.0, rtol=0, atol=1e-9), "class mean SV sums to 1")
        require(np.all(self.dispersion[ok] >= 0), "dispersion non-negative")
        upper = np.log(len(self.groups)) + 1e-12
        require(np.all((self.entropy[ok] >= -1e-15) & (self.entropy[ok] <= upper)), "entropy within [0, ln K]")


def class_vector_stats(vectors: SpendingVectors, classes: pd.Series, n: int) -> ClassVectorStats:
    labels = _class_index(vectors, classes)
    means = class_means(vectors.matrix, labels, n)
    return ClassVectorStats(
        variant=vectors.variant,
        groups=vectors.groups,
        sizes=np.bincount(labels - 1, minlength=n),
        means=means,
        dispersion=class_dispersion(vectors.matrix, labels, n),
        entropy=class_entropy(means),
        cash_mean=class_means(vectors.cash_share, labels, n),
        cash_dispersion=class_dispersion(vectors.cash_share, labels, n),
    )
