"""Shared domain types.

Transactions are held column-wise in a pandas ``DataFrame`` (the *ledger*) with
columns ``ego_id``, ``month`` (``YYYY-MM``), ``cents`` (int64) and ``mcc``.
Money is kept in integer cents so that every aggregate is exact and independent
of summation order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph

LEDGER_COLUMNS = ("ego_id", "month", "cents", "mcc")
SUM_TOL = 1e-9


class InvariantViolation(AssertionError):
    """A data invariant failed mid-pipeline; the message names the invariant."""


def require(condition, invariant: str) -> None:
    if not condition:
        raise InvariantViolation(invariant)


class Gender(enum.IntEnum):
    FEMALE = 0
    MALE = 1

    @classmethod
    def parse(cls, text: str | None) -> "Gender | None":
        t = (text or "").strip().upper()
        if t in ("F", "FEMALE", "0"):
            return cls.FEMALE
        if t in ("M", "MALE", "1"):
            return cls.MALE
        if t == "":
            return None
        raise ValueError(f"bad gender {text!r}")


@dataclass(frozen=True)
class EgoProfile:
    id: str
    age: int
    gender: Gender | None
    zip: str | None = None

    def __post_init__(self):
        if self.age < 0:
            raise ValueError(f"ego {self.id}: negative age")


@dataclass(frozen=True)
class Transaction:
    ego: str
    month: str
    amount: Decimal
    mcc: int

    def __post_init__(self):
        if self.amount < 0:
            raise ValueError(f"ego {self.ego}: negative amount")

    @property
    def cents(self) -> int:
        return int((self.amount * 100).to_integral_value())


def make_ledger(transactions: Iterable[Transaction]) -> pd.DataFrame:
    rows = [(t.ego, t.month, t.cents, t.mcc) for t in transactions]
    return ledger_frame(
        [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], [r[3] for r in rows]
    )


def ledger_frame(ego_id, month, cents, mcc) -> pd.DataFrame:
    df = pd.DataFrame({
        "ego_id": pd.Series(ego_id, dtype=object).astype(str),
        "month": pd.Series(month, dtype=object).astype(str),
        "cents": np.asarray(cents, dtype=np.int64),
        "mcc": np.asarray(mcc, dtype=np.int64),
    })
    if (df["cents"] < 0).any():
        raise ValueError("negative transaction amount")
    return df


def profiles_frame(profiles: Iterable[EgoProfile]) -> pd.DataFrame:
    """Index ``ego_id``; gender as float (0 female, 1 male, NaN missing)."""
    profiles = list(profiles)
    df = pd.DataFrame({
        "ego_id": [p.id for p in profiles],
        "age": np.array([p.age for p in profiles], dtype=np.int64),
        "gender": np.array(
            [np.nan if p.gender is None else float(p.gender) for p in profiles], dtype=float
        ),
        "zip": [p.zip or "" for p in profiles],
    })
    if df["ego_id"].duplicated().any():
        dup = df.loc[df["ego_id"].duplicated(), "ego_id"].iloc[0]
        raise ValueError(f"duplicate profile id {dup}")
    return df.set_index("ego_id").sort_index()


@dataclass(frozen=True, eq=False)
class SocialGraph:
    """Undirected simple graph.

    ``nodes`` is sorted; ``edges`` is an ``(m, 2)`` array of node indices with
    ``i < j`` per row, rows sorted and unique.
    """

    nodes: tuple[str, ...]
    edges: np.ndarray
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if list(nodes) != sorted(set(nodes)):
            raise ValueError("nodes must be sorted and unique")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if (e[:, 0] == e[:, 1]).any():
                raise ValueError("self-loop in social graph")
            if e.min() < 0 or e.max() >= len(nodes):
                raise ValueError("edge endpoint outside node set")
            e = np.sort(e, axis=1)
            order = np.lexsort((e[:, 1], e[:, 0]))
            e = e[order]
            if (np.diff(e, axis=0) == 0).all(axis=1).any():
                raise ValueError("duplicate edge in social graph")
        e = np.ascontiguousarray(e)
        e.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(nodes)})

    @classmethod
    def from_pairs(cls, nodes: Iterable[str], pairs: Iterable[tuple[str, str]]) -> "SocialGraph":
        """Build from id pairs; drops self-loops and duplicate pairs."""
        nodes = sorted(set(nodes))
        index = {n: i for i, n in enumerate(nodes)}
        arr = np.array([(index[a], index[b]) for a, b in pairs], dtype=np.int64).reshape(-1, 2)
        return cls.from_index_pairs(nodes, arr)

    @classmethod
    def from_index_pairs(cls, nodes: Sequence[str], pairs: np.ndarray) -> "SocialGraph":
        arr = np.sort(np.asarray(pairs, dtype=np.int64).reshape(-1, 2), axis=1)
        arr = arr[arr[:, 0] != arr[:, 1]]
        arr = np.unique(arr, axis=0)
        return cls(tuple(nodes), arr)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def index(self, node: str) -> int:
        return self._index[node]

    def edge_ids(self) -> list[tuple[str, str]]:
        return [(self.nodes[a], self.nodes[b]) for a, b in self.edges]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def adjacency(self) -> sparse.csr_matrix:
        n = self.n_nodes
        a, b = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(a), dtype=np.int8)
        return sparse.csr_matrix((data, (np.r_[a, b], np.r_[b, a])), shape=(n, n))

    def subgraph(self, keep: Iterable[str]) -> "SocialGraph":
        keep_set = set(keep)
        mask = np.array([n in keep_set for n in self.nodes], dtype=bool)
        new_index = np.cumsum(mask) - 1
        nodes = tuple(n for n, k in zip(self.nodes, mask) if k)
        e = self.edges
        sel = mask[e[:, 0]] & mask[e[:, 1]] if len(e) else np.zeros(0, dtype=bool)
        return SocialGraph(nodes, new_index[e[sel]])

    def components(self) -> list[tuple[str, ...]]:
        """Connected components, each sorted; largest first, ties by smallest member."""
        if not self.nodes:
            return []
        _, labels = csgraph.connected_components(self.adjacency(), directed=False)
        groups: dict[int, list[str]] = {}
        for node, lab in zip(self.nodes, labels):
            groups.setdefault(int(lab), []).append(node)
        comps = [tuple(g) for g in groups.values()]
        comps.sort(key=lambda c: (-len(c), c[0]))
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) <= 1


@dataclass(frozen=True)
class SpendingVector:
    owner: str
    components: Mapping[str, float]
    variant: str

    def __post_init__(self):
        if self.variant not in ("excluding_cash", "including_cash"):
            raise ValueError(f"unknown variant {self.variant!r}")
        vals = list(self.components.values())
        if any(v < 0 or v > 1 for v in vals):
            raise ValueError(f"{self.owner}: component outside [0, 1]")
        if not math.isclose(math.fsum(vals), 1.0, rel_tol=0, abs_tol=SUM_TOL):
            raise ValueError(f"{self.owner}: components sum to {math.fsum(vals)}")


@dataclass(frozen=True)
class PurchaseDistribution:
    ego: str
    entries: Mapping[int, float]

    def __post_init__(self):
        if not math.isclose(math.fsum(self.entries.values()), 1.0, rel_tol=0, abs_tol=SUM_TOL):
            raise ValueError(f"{self.ego}: purchase distribution does not sum to 1")

    def check_no_cash(self, cash_mccs: Iterable[int]) -> None:
        bad = set(self.entries) & set(cash_mccs)
        if bad:
            raise ValueError(f"{self.ego}: cash categories {sorted(bad)} in purchase distribution")
