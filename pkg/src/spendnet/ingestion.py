"""Reading interaction/transaction/profile logs and building the joined dataset."""

from __future__ import annotations

import csv
import logging
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np
import pandas as pd

from .model import LEDGER_COLUMNS, SocialGraph, require

log = logging.getLogger(__name__)

INTERACTION_COLUMNS = ("caller_id", "callee_id", "timestamp", "kind", "duration")
TRANSACTION_COLUMNS = ("ego_id", "month", "amount", "mcc")
PROFILE_COLUMNS = ("ego_id", "age", "gender", "zip")
MAX_MALFORMED_FRACTION = 0.10
_MONTH_RE = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")
_AMOUNT_RE = re.compile(r"^\d+(\.\d{1,2})?$")


class IngestError(RuntimeError):
    pass


class InteractionEvent(NamedTuple):
    caller: str
    callee: str
    timestamp: int
    kind: str
    duration: int


@dataclass
class ParseStats:
    rows: int = 0
    malformed: int = 0
    self_interactions: int = 0

    @property
    def kept(self) -> int:
        return self.rows - self.malformed - self.self_interactions


def _check_header(path, fieldnames, expected):
    if fieldnames is None or list(fieldnames[: len(expected)]) != list(expected):
        raise IngestError(f"{path}: expected header {','.join(expected)}, got {fieldnames}")


def _fail_if_mostly_malformed(path, stats: ParseStats):
    if stats.rows and stats.malformed > MAX_MALFORMED_FRACTION * stats.rows:
        raise IngestError(f"{path}: {stats.malformed} of {stats.rows} rows malformed")


def parse_interactions(path: str | Path, stats: ParseStats | None = None) -> Iterator[InteractionEvent]:
    """Stream interaction events in file order.

    Malformed rows and caller == callee rows are skipped and counted in
    ``stats``. Raises :class:`IngestError` after the last row when more than
    10% of rows were malformed.
    """
    stats = stats if stats is not None else ParseStats()
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        _check_header(path, next(reader, None), INTERACTION_COLUMNS)
        for row in reader:
            if not row:
                continue
            stats.rows += 1
            try:
                caller, callee, ts, kind, dur = (c.strip() for c in row)
                timestamp, duration = int(ts), int(dur or 0)
                kind = kind.lower()
                if not caller or not callee or kind not in ("call", "sms") or duration < 0:
                    raise ValueError
            except ValueError:
                stats.malformed += 1
                continue
            if caller == callee:
                stats.self_interactions += 1
                continue
            yield InteractionEvent(caller, callee, timestamp, kind, 0 if kind == "sms" else duration)
    _fail_if_mostly_malformed(path, stats)


@dataclass(frozen=True, eq=False)
class DirectedEventGraph:
    """Distinct directed caller -> callee pairs with event multiplicities."""

    nodes: tuple[str, ...]
    src: np.ndarray
    dst: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_events(cls, events: Iterable[InteractionEvent]) -> "DirectedEventGraph":
        pair_counts: dict[tuple[str, str], int] = {}
        for ev in events:
            if ev.caller == ev.callee:
                continue
            key = (ev.caller, ev.callee)
            pair_counts[key] = pair_counts.get(key, 0) + 1
        return cls.from_pair_counts(pair_counts)

    @classmethod
    def from_pair_counts(cls, pair_counts: dict[tuple[str, str], int], nodes=None) -> "DirectedEventGraph":
        ids = set(nodes or ())
        for a, b in pair_counts:
            ids.add(a)
            ids.add(b)
        node_list = tuple(sorted(ids))
        index = {n: i for i, n in enumerate(node_list)}
        items = sorted((index[a], index[b], c) for (a, b), c in pair_counts.items())
        arr = np.array(items, dtype=np.int64).reshape(-1, 3)
        return cls(node_list, arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy())

    @property
    def n_events(self) -> int:
        return int(self.counts.sum())

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=len(self.nodes))

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=len(self.nodes))

    def induced(self, keep: np.ndarray) -> "DirectedEventGraph":
        """Subgraph on the nodes where boolean mask ``keep`` is set."""
        new_index = np.cumsum(keep) - 1
        sel = keep[self.src] & keep[self.dst]
        nodes = tuple(n for n, k in zip(self.nodes, keep) if k)
        return DirectedEventGraph(nodes, new_index[self.src[sel]], new_index[self.dst[sel]], self.counts[sel])


def _csr(rows: np.ndarray, cols: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(rows, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols[order]


def prune_inactive(g: DirectedEventGraph) -> DirectedEventGraph:
    """Recursively drop nodes with no incoming or no outgoing events.

    Work-queue peeling, O(V + E). The result is the unique maximal subgraph in
    which every node has positive in- and out-degree.
    """
    n = len(g.nodes)
    k_in, k_out = g.in_degree(), g.out_degree()
    out_ptr, out_nb = _csr(g.src, g.dst, n)
    in_ptr, in_nb = _csr(g.dst, g.src, n)
    alive = np.ones(n, dtype=bool)
    queue = deque(np.flatnonzero((k_in == 0) | (k_out == 0)).tolist())
    while queue:
        v = queue.popleft()
        if not alive[v]:
            continue
        alive[v] = False
        for w in out_nb[out_ptr[v] : out_ptr[v + 1]]:
            if alive[w]:
                k_in[w] -= 1
                if k_in[w] == 0:
                    queue.append(w)
        for w in in_nb[in_ptr[v] : in_ptr[v + 1]]:
            if alive[w]:
                k_out[w] -= 1
                if k_out[w] == 0:
                    queue.append(w)
    return g.induced(alive)


def undirect(g: DirectedEventGraph) -> SocialGraph:
    pairs = np.column_stack([g.src, g.dst])
    return SocialGraph.from_index_pairs(g.nodes, pairs)


def largest_connected_component(g: SocialGraph) -> SocialGraph:
    comps = g.components()
    if not comps:
        return g
    if len(comps) == 1:
        return g
    return g.subgraph(comps[0])


def read_transactions(path: str | Path, stats: ParseStats | None = None) -> pd.DataFrame:
    """Load ``transactions.csv`` into a ledger sorted by (ego_id, month)."""
    stats = stats if stats is not None else ParseStats()
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    _check_header(path, list(raw.columns), TRANSACTION_COLUMNS)
    stats.rows += len(raw)
    ego = raw["ego_id"].str.strip()
    month = raw["month"].str.strip()
    amount = raw["amount"].str.strip()
    mcc = pd.to_numeric(raw["mcc"].str.strip(), errors="coerce")
    ok = (
        (ego != "")
        & month.str.match(_MONTH_RE)
        & amount.str.match(_AMOUNT_RE)
        & mcc.notna()
    )
    stats.malformed += int((~ok).sum())
    _fail_if_mostly_malformed(path, stats)
    cents = np.round(amount[ok].astype(float).to_numpy() * 100).astype(np.int64)
    ledger = pd.DataFrame({
        "ego_id": ego[ok].to_numpy(dtype=object),
        "month": month[ok].to_numpy(dtype=object),
        "cents": cents,
        "mcc": mcc[ok].astype(np.int64).to_numpy(),
    })
    return sort_ledger(ledger)


def sort_ledger(ledger: pd.DataFrame) -> pd.DataFrame:
    return ledger.sort_values(list(LEDGER_COLUMNS), kind="mergesort").reset_index(drop=True)


def merge_ledgers(*ledgers: pd.DataFrame) -> pd.DataFrame:
    """Concatenate independently parsed ledgers in a deterministic order."""
    return sort_ledger(pd.concat(ledgers, ignore_index=True))


def read_profiles(path: str | Path, stats: ParseStats | None = None) -> pd.DataFrame:
    """Load ``profiles.csv``; gender is 0.0 (F), 1.0 (M) or NaN (missing)."""
    stats = stats if stats is not None else ParseStats()
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    _check_header(path, list(raw.columns), PROFILE_COLUMNS)
    stats.rows += len(raw)
    ego = raw["ego_id"].str.strip()
    age = pd.to_numeric(raw["age"].str.strip(), errors="coerce")
    g = raw["gender"].str.strip().str.upper()
    gender = g.map({"F": 0.0, "M": 1.0, "": np.nan})
    ok = (ego != "") & age.notna() & (age >= 0) & (age == age.round()) & g.isin(["F", "M", ""])
    ok &= ~ego.duplicated(keep="first")
    stats.malformed += int((~ok).sum())
    _fail_if_mostly_malformed(path, stats)
    df = pd.DataFrame({
        "ego_id": ego[ok].to_numpy(dtype=object),
        "age": age[ok].astype(np.int64).to_numpy(),
        "gender": gender[ok].astype(float).to_numpy(),
        "zip": raw.loc[ok, "zip"].str.strip().to_numpy(dtype=object),
    })
    return df.set_index("ego_id").sort_index()


def filter_active(ledger: pd.DataFrame, min_months: int = 2) -> pd.DataFrame:
    """Keep egos with purchases in at least ``min_months`` distinct months."""
    if min_months < 1:
        raise ValueError("min_months must be >= 1")
    months = ledger.groupby("ego_id", sort=False)["month"].nunique()
    active = months.index[months >= min_months]
    return ledger[ledger["ego_id"].isin(active)].reset_index(drop=True)


@dataclass(frozen=True, eq=False)
class JoinedDataset:
    graph: SocialGraph
    profiles: pd.DataFrame
    ledger: pd.DataFrame
    dropped: dict = field(default_factory=dict)

    def check(self) -> None:
        """Raise ``InvariantViolation`` naming the first violated invariant."""
        ids = set(self.graph.nodes)
        require(self.graph.is_connected(), "joined graph is connected")
        require(ids <= set(self.profiles.index), "every node has a profile")
        require(ids <= set(self.ledger["ego_id"].unique()), "every node has a transaction")


def join_datasets(graph: SocialGraph, profiles: pd.DataFrame, ledger: pd.DataFrame) -> JoinedDataset:
    """Intersect the communication graph with the bank corpus and keep the LCC."""
    spenders = set(ledger.loc[ledger["cents"] > 0, "ego_id"].unique())
    ids = set(graph.nodes) & set(profiles.index) & spenders
    if not ids:
        raise IngestError(
            f"no ids shared by graph ({graph.n_nodes}), profiles ({len(profiles)}) "
            f"and ledger ({len(spenders)} spenders)"
        )
    g = graph.subgraph(ids)
    while True:
        lcc = largest_connected_component(g)
        keep = set(lcc.nodes) & ids
        if len(keep) == lcc.n_nodes:
            g = lcc
            break
        g = lcc.subgraph(keep)
    nodes = list(g.nodes)
    dropped = {
        "graph_nodes": graph.n_nodes,
        "matched": len(ids),
        "outside_lcc": len(ids) - g.n_nodes,
    }
    log.info("joined dataset: %d of %d graph nodes kept", g.n_nodes, graph.n_nodes)
    return JoinedDataset(
        graph=g,
        profiles=profiles.loc[nodes],
        ledger=ledger[ledger["ego_id"].isin(set(nodes))].reset_index(drop=True),
        dropped=dropped,
    )
