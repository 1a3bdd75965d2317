"""Exact and heuristic depot tours over small location sets."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

HELD_KARP_MAX = 20
TIE_TOL = 1e-12


class TourTooLarge(ValueError):
    pass


def _cost_to_go(nodes: list[int], dist: np.ndarray) -> np.ndarray:
    """g[mask, i]: shortest path from node i (position in ``nodes``; the last slot is the
    depot) through every node of ``mask`` and back to the depot."""
    n = len(nodes)
    idx = np.array(nodes + [0])
    d = dist[np.ix_(idx, idx)]
    full = 1 << n
    g = np.full((full, n + 1), np.inf)
    g[0, :] = d[:, n]
    masks = np.arange(full)
    size = np.zeros(full, dtype=np.int64)
    for i in range(n):
        size += (masks >> i) & 1
    for k in range(1, n + 1):          # by subset size, so every g[mask ^ bit] is final
        layer = masks[size == k]
        best = np.full((len(layer), n + 1), np.inf)
        for i in range(n):
            has = (layer >> i) & 1 == 1
            sub = layer[has]
            cand = d[None, :, i] + g[sub ^ (1 << i), i][:, None]
            best[has] = np.minimum(best[has], cand)
        g[layer] = best
    return g


def optimal_tour(locations, dist: np.ndarray) -> tuple[tuple, float]:
    """Minimum depot->...->depot tour over ``locations`` (distance-matrix indices, depot 0).

    Among optimal tours the lexicographically smallest visiting order is returned.
    """
    locs = sorted(set(int(l) for l in locations))
    if not locs:
        return (), 0.0
    if len(locs) > HELD_KARP_MAX:
        raise TourTooLarge(f"{len(locs)} locations exceed the exact-tour limit")
    n = len(locs)
    g = _cost_to_go(locs, dist)
    full = (1 << n) - 1
    length = float(g[full, n])
    order = []
    mask, cur = full, n
    idx = locs + [0]
    while mask:
        target = g[mask, cur]
        for i in range(n):   # ascending location id -> lexicographic tie-break
            if mask & (1 << i):
                val = dist[idx[cur], idx[i]] + g[mask ^ (1 << i), i]
                if val <= target + TIE_TOL * max(1.0, abs(target)):
                    order.append(locs[i])
                    mask ^= 1 << i
                    cur = i
                    break
    return tuple(order), length


def tour_length(order, dist: np.ndarray) -> float:
    if not order:
        return 0.0
    seq = [0, *order, 0]
    return float(sum(dist[a, b] for a, b in zip(seq[:-1], seq[1:])))


class SubsetTours:
    """Tour length of every subset of a candidate set, indexed by bitmask."""

    def __init__(self, dist: np.ndarray):
        self.dist = dist
        self._cache: dict[tuple, np.ndarray] = {}

    def table(self, cands: tuple) -> np.ndarray:
        if cands not in self._cache:
            if len(cands) > HELD_KARP_MAX:
                raise TourTooLarge(f"{len(cands)} candidates")
            g = _cost_to_go(list(cands), self.dist)
            self._cache[cands] = g[:, len(cands)].copy()
            if len(self._cache) > 256:
                self._cache.pop(next(iter(self._cache)))
        return self._cache[cands]


def nearest_neighbour_two_opt(locations, dist: np.ndarray) -> tuple[tuple, float]:
    """Heuristic tour: nearest-neighbour construction improved by 2-opt moves."""
    rest = sorted(set(int(l) for l in locations))
    if not rest:
        return (), 0.0
    order, cur = [], 0
    while rest:
        nxt = min(rest, key=lambda l: (dist[cur, l], l))
        order.append(nxt)
        rest.remove(nxt)
        cur = nxt
    improved = True
    while improved:
        improved = False
        seq = [0, *order, 0]
        for i in range(1, len(seq) - 2):
            for j in range(i + 1, len(seq) - 1):
                a, b, c, d = seq[i - 1], seq[i], seq[j], seq[j + 1]
                if dist[a, c] + dist[b, d] < dist[a, b] + dist[c, d] - 1e-12:
                    seq[i:j + 1] = reversed(seq[i:j + 1])
                    improved = True
        order = seq[1:-1]
    return tuple(order), tour_length(order, dist)


def best_tour(locations, dist: np.ndarray, exact_limit: int = 12) -> tuple[tuple, float, bool]:
    """Exact tour for small sets, heuristic beyond ``exact_limit``; third item flags exactness."""
    locs = set(locations)
    if len(locs) <= exact_limit:
        o, q = optimal_tour(locs, dist)
        return o, q, True
    o, q = nearest_neighbour_two_opt(locs, dist)
    return o, q, False


def cheapest_insertion(route, loc: int, dist: np.ndarray) -> tuple[tuple, float]:
    """Insert ``loc`` where it adds the least travel; unchanged if already routed."""
    route = tuple(route)
    if loc in route:
        return route, 0.0
    seq = [0, *route, 0]
    best, pos = np.inf, 0
    for i in range(len(seq) - 1):
        delta = dist[seq[i], loc] + dist[loc, seq[i + 1]] - dist[seq[i], seq[i + 1]]
        if delta < best - 1e-12:
            best, pos = delta, i
    return route[:pos] + (loc,) + route[pos:], float(best)
