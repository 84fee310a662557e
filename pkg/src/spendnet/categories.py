"""Per-ego purchase distributions, the co-spending correlation rho and its graph."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import sparse

from .taxonomy import CategoryTaxonomy

log = logging.getLogger(__name__)

MIN_PURCHASES = 100
RHO_MIN = 1.5
REFERENCE_POPULATION = 3_680_652
REFERENCE_MIN_COMMON = 1000


@dataclass(frozen=True, eq=False)
class PurchaseDistributions:
    """Rows are egos, columns merchant categories; each row sums to 1."""

    egos: np.ndarray
    mccs: np.ndarray
    r: sparse.csr_matrix
    excluded_egos: int = 0
    dropped_mccs: tuple[int, ...] = ()

    def __len__(self):
        return len(self.egos)

    def dense(self) -> pd.DataFrame:
        return pd.DataFrame(self.r.toarray(), index=self.egos, columns=self.mccs)

    def entries(self, ego: str) -> dict[int, float]:
        i = int(np.searchsorted(self.egos, ego))
        if i >= len(self.egos) or self.egos[i] != ego:
            raise KeyError(ego)
        row = self.r.getrow(i)
        return {int(self.mccs[j]): float(x) for j, x in zip(row.indices, row.data)}


def purchase_distributions(
    ledger: pd.DataFrame, taxonomy: CategoryTaxonomy, min_purchases: int = MIN_PURCHASES
) -> PurchaseDistributions:
    """r(c, u): fraction of ego u's in-scope spending on category c.

    Cash/transfer and unknown mccs are removed first, then categories with
    fewer than ``min_purchases`` purchases across the corpus.
    """
    valid = ledger["mcc"].isin([c.mcc for c in taxonomy.non_cash])
    tx = ledger.loc[valid, ["ego_id", "mcc", "cents"]]
    n_purchases = tx.groupby("mcc").size()
    keep = n_purchases.index[n_purchases >= min_purchases]
    dropped = tuple(int(m) for m in n_purchases.index[n_purchases < min_purchases])
    tx = tx[tx["mcc"].isin(keep)]
    spent = tx.groupby(["ego_id", "mcc"], sort=True)["cents"].sum()
    spent = spent[spent > 0]
    all_egos = pd.Index(sorted(ledger["ego_id"].unique()))
    egos = spent.index.get_level_values(0).unique()
    mccs = np.sort(np.asarray(keep, dtype=np.int64))
    row = egos.get_indexer(spent.index.get_level_values(0))
    col = np.searchsorted(mccs, spent.index.get_level_values(1).to_numpy())
    vals = spent.to_numpy(dtype=float)
    totals = np.bincount(row, weights=vals, minlength=len(egos))
    r = sparse.csr_matrix((vals / totals[row], (row, col)), shape=(len(egos), len(mccs)))
    r.sort_indices()
    return PurchaseDistributions(
        egos=egos.to_numpy(dtype=object),
        mccs=mccs,
        r=r,
        excluded_egos=len(all_egos) - len(egos),
        dropped_mccs=dropped,
    )


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    mccs: np.ndarray
    rho: np.ndarray       # C x C, NaN where undefined
    common: np.ndarray    # C x C egos with r > 0 in both
    n: int

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rho, index=self.mccs, columns=self.mccs)


def _mirror_upper(a: np.ndarray) -> np.ndarray:
    up = np.triu(a)
    return up + np.triu(up, 1).T


def correlation_matrix(dist: PurchaseDistributions) -> CorrelationMatrix:
    """rho(c_i, c_j) = n sum_u r_i r_j / (sum_u r_i sum_u r_j) by sparse accumulation."""
    n = len(dist)
    if n < 2:
        raise ValueError("need at least two egos")
    r = dist.r
    col_sum = np.asarray(r.sum(axis=0)).ravel()
    co = _mirror_upper((r.T @ r).toarray())
    b = r.copy()
    b.data = np.ones_like(b.data)
    common = _mirror_upper((b.T @ b).toarray()).astype(np.int64)
    denom = np.outer(col_sum, col_sum)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0, n * co / np.where(denom > 0, denom, 1.0), np.nan)
    rho = _mirror_upper(rho)
    return CorrelationMatrix(dist.mccs, rho, common, n)


def default_min_common(n_egos: int) -> int:
    """The reference pair-support floor rescaled to the corpus size, at least 10."""
    return max(10, math.ceil(REFERENCE_MIN_COMMON * n_egos / REFERENCE_POPULATION))


@dataclass(frozen=True, eq=False)
class CategoryCorrelationGraph:
    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int, float], ...]
    communities: dict[int, int] | None = None
    modularity: float | None = None
    level_modularity: tuple[float, ...] = field(default=())

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def with_communities(self, labels, modularity, levels=()) -> "CategoryCorrelationGraph":
        return replace(self, communities=dict(labels), modularity=modularity, level_modularity=tuple(levels))


def build_graph(
    matrix: CorrelationMatrix, rho_min: float = RHO_MIN, min_common: int | None = None
) -> CategoryCorrelationGraph:
    """Keep pairs with rho > rho_min and at least ``min_common`` shared purchasers."""
    if rho_min <= 0:
        raise ValueError("rho_min must be positive")
    if min_common is None:
        min_common = default_min_common(matrix.n)
    if min_common <= 0:
        raise ValueError("min_common must be positive")
    rho = np.nan_to_num(matrix.rho, nan=-np.inf)
    keep = np.triu((rho > rho_min) & (matrix.common >= min_common), 1)
    ii, jj = np.nonzero(keep)
    edges = tuple(
        (int(matrix.mccs[i]), int(matrix.mccs[j]), float(matrix.rho[i, j])) for i, j in zip(ii, jj)
    )
    nodes = tuple(sorted({e[0] for e in edges} | {e[1] for e in edges}))
    if not edges:
        log.warning("correlation graph is empty at rho > %s, common >= %s", rho_min, min_common)
    return CategoryCorrelationGraph(nodes, edges)
