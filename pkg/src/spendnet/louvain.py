"""Weighted-modularity Louvain community detection.

Nodes are visited in ascending order (or a seeded permutation of it). When
several communities give the same gain the node stays put if that is one of
them, otherwise it joins the community with the smallest label, and labels
are the smallest node of each community, so ties resolve toward low codes.
"""

from __future__ import annotations

from typing import Hashable, Iterable, Sequence

import numpy as np

_REL_EPS = 1e-12


def modularity(nodes: Sequence[Hashable], edges: Iterable[tuple], labels: dict) -> float:
    """Newman weighted modularity of ``labels`` on an undirected graph."""
    deg: dict = {v: 0.0 for v in nodes}
    internal: dict = {}
    two_m = 0.0
    for a, b, w in edges:
        deg[a] += w
        deg[b] += w
        two_m += 2 * w
        if labels[a] == labels[b]:
            internal[labels[a]] = internal.get(labels[a], 0.0) + 2 * w
    if two_m == 0:
        return 0.0
    tot: dict = {}
    for v in nodes:
        tot[labels[v]] = tot.get(labels[v], 0.0) + deg[v]
    return sum(internal.get(c, 0.0) / two_m - (t / two_m) ** 2 for c, t in tot.items())


def _one_level(adj: list[dict[int, float]], order: list[int], labels: list[int]) -> bool:
    """Greedy local moving until no node improves; returns True if anything moved."""
    k = [sum(a.values()) for a in adj]
    two_m = sum(k)
    tot: dict[int, float] = {}
    for i, c in enumerate(labels):
        tot[c] = tot.get(c, 0.0) + k[i]
    moved_any = False
    while True:
        moved = False
        for i in order:
            own = labels[i]
            ki = k[i]
            links: dict[int, float] = {}
            for j, w in adj[i].items():
                if j != i:
                    links[labels[j]] = links.get(labels[j], 0.0) + w
            tot[own] -= ki
            own_gain = links.get(own, 0.0) - tot[own] * ki / two_m
            best, best_gain = own, own_gain
            for c in sorted(links):
                gain = links[c] - tot[c] * ki / two_m
                if gain > best_gain + _REL_EPS * (abs(best_gain) + ki):
                    best, best_gain = c, gain
            tot[best] = tot.get(best, 0.0) + ki
            if best != own:
                labels[i] = best
                moved = True
        if not moved:
            return moved_any
        moved_any = True


def _aggregate(adj: list[dict[int, float]], labels: list[int]) -> tuple[list[dict[int, float]], list[int]]:
    comms = sorted(set(labels))
    index = {c: n for n, c in enumerate(comms)}
    new: list[dict[int, float]] = [dict() for _ in comms]
    for i, nbrs in enumerate(adj):
        ci = index[labels[i]]
        for j, w in nbrs.items():
            cj = index[labels[j]]
            new[ci][cj] = new[ci].get(cj, 0.0) + w
    return new, [index[c] for c in labels]


def louvain(
    nodes: Sequence[Hashable],
    edges: Iterable[tuple],
    seed: int | None = None,
) -> tuple[dict, float, list[float]]:
    """Partition ``nodes`` with the Louvain method.

    Returns ``(labels, modularity, level_modularity)``; labels are 1..K ordered
    by each community's smallest node, ``level_modularity`` holds the
    modularity after every aggregation level.
    """
    nodes = sorted(nodes)
    edges = list(edges)
    index = {v: i for i, v in enumerate(nodes)}
    adj: list[dict[int, float]] = [dict() for _ in nodes]
    for a, b, w in edges:
        if a == b:
            raise ValueError("self-loop in input graph")
        i, j = index[a], index[b]
        adj[i][j] = adj[i].get(j, 0.0) + w
        adj[j][i] = adj[j].get(i, 0.0) + w
    rng = None if seed is None else np.random.default_rng(seed)

    member = list(range(len(nodes)))   # original node -> current super-node
    levels: list[float] = []
    while True:
        order = list(range(len(adj)))
        if rng is not None:
            order = [int(x) for x in rng.permutation(len(adj))]
        labels = list(range(len(adj)))
        if not _one_level(adj, order, labels):
            break
        adj, compact = _aggregate(adj, labels)
        member = [compact[m] for m in member]
        levels.append(modularity(nodes, edges, {v: member[index[v]] for v in nodes}))

    first: dict[int, int] = {}
    for pos, m in enumerate(member):
        first.setdefault(m, pos)
    rank = {m: r for r, m in enumerate(sorted(first, key=first.get), start=1)}
    out = {v: rank[member[index[v]]] for v in nodes}
    q = modularity(nodes, edges, out)
    if not levels:
        levels.append(q)
    return out, q, levels
