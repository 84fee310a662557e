"""Compiled double-edge-swap kernel.

The edge set lives in a linear-probing hash table of ``min * n + max`` keys
with backward-shift deletion, so membership tests stay O(1) without tombstones.
"""

import numpy as np
from numba import njit

_EMPTY = -1
_MULT = 0x5851F42D4C957F2D


@njit(cache=True, inline="always")
def _key(a, b, n):
    if a < b:
        return a * n + b
    return b * n + a


@njit(cache=True, inline="always")
def _slot(key, mask):
    h = key * _MULT
    h ^= h >> 29
    return h & mask


@njit(cache=True)
def _contains(table, mask, key):
    i = _slot(key, mask)
    while table[i] != _EMPTY:
        if table[i] == key:
            return True
        i = (i + 1) & mask
    return False


@njit(cache=True)
def _insert(table, mask, key):
    i = _slot(key, mask)
    while table[i] != _EMPTY:
        i = (i + 1) & mask
    table[i] = key


@njit(cache=True)
def _remove(table, mask, key):
    i = _slot(key, mask)
    while table[i] != key:
        i = (i + 1) & mask
    table[i] = _EMPTY
    j = i
    while True:
        j = (j + 1) & mask
        k = table[j]
        if k == _EMPTY:
            return
        home = _slot(k, mask)
        # move k back into the hole unless its home lies cyclically in (i, j]
        if i <= j:
            stays = i < home <= j
        else:
            stays = home > i or home <= j
        if not stays:
            table[i] = k
            table[j] = _EMPTY
            i = j


@njit(cache=True, nogil=True)
def double_edge_swap(edges, n_nodes, first, second, flip):
    """Attempt one swap per entry of ``first``/``second``/``flip`` in place.

    Edges (u, v) and (x, y) become (u, x) and (v, y); with ``flip`` set the
    second edge is read as (y, x). Swaps that would create a self-loop or a
    duplicate edge are skipped. Returns the number of accepted swaps.
    """
    m = edges.shape[0]
    cap = 1
    while cap < 4 * m:
        cap *= 2
    mask = cap - 1
    table = np.full(cap, _EMPTY, dtype=np.int64)
    for e in range(m):
        _insert(table, mask, _key(edges[e, 0], edges[e, 1], n_nodes))
    accepted = 0
    for t in range(first.shape[0]):
        i = first[t]
        j = second[t]
        if i == j:
            continue
        u = edges[i, 0]
        v = edges[i, 1]
        x = edges[j, 0]
        y = edges[j, 1]
        if flip[t]:
            x, y = y, x
        if u == x or v == y:
            continue
        k1 = _key(u, x, n_nodes)
        k2 = _key(v, y, n_nodes)
        if _contains(table, mask, k1) or _contains(table, mask, k2):
            continue
        _remove(table, mask, _key(u, v, n_nodes))
        _remove(table, mask, _key(x, y, n_nodes))
        _insert(table, mask, k1)
        _insert(table, mask, k2)
        edges[i, 0] = u
        edges[i, 1] = x
        edges[j, 0] = v
        edges[j, 1] = y
        accepted += 1
    return accepted
