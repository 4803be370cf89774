"""Maximum-weight independent sets on neighborhood graphs.

An independent set of the epsilon graph is exactly an epsilon-separated
subset, and a maximal one is also epsilon-dense, so these solvers drive the
coarsening step. greedy_mwis is the workhorse; exact_mwis is a small-scale
oracle used for verification and for tiny chunks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .dataset import WeightedDataset, pairwise_distances
from .errors import GuardError, ValidationError
from .graph import NeighborhoodGraph

MAX_EXACT_MWIS = 26


@dataclass(frozen=True)
class IndependentSet:
    """Solver output: graph-local vertex indices plus their summed weight."""

    vertex_ids: tuple[int, ...]
    total_weight: float

    def __len__(self) -> int:
        return len(self.vertex_ids)


@njit(cache=True, nogil=True)
def _greedy_select(adj, w, tie_u):  # pragma: no cover - exercised via greedy_mwis
    n = w.size
    alive = np.ones(n, np.bool_)
    nbr_w = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if adj[i, j]:
                acc += w[j]
        nbr_w[i] = acc
    selected = np.zeros(n, np.bool_)
    remaining = n
    step = 0
    while remaining > 0:
        best = np.inf
        ties = 0
        for i in range(n):
            if alive[i]:
                r = nbr_w[i] / w[i]
                if r < best:
                    best = r
                    ties = 1
                elif r == best:
                    ties += 1
        k = int(tie_u[step] * ties)
        if k == ties:  # tie_u may be exactly 1.0 - ulp rounding up
            k = ties - 1
        step += 1
        x = -1
        seen = -1
        for i in range(n):
            if alive[i] and nbr_w[i] / w[i] == best:
                seen += 1
                if seen == k:
                    x = i
                    break
        selected[x] = True
        # drop x and its alive neighborhood, updating neighbor weight sums
        for u in range(n):
            if alive[u] and (u == x or adj[x, u]):
                alive[u] = False
                remaining -= 1
                for v in range(n):
                    if alive[v] and adj[u, v]:
                        nbr_w[v] -= w[u]
    return selected


def greedy_mwis(g: NeighborhoodGraph, seed=0) -> IndependentSet:
    """Greedy maximal independent set by repeated minimum weighted degree.

    Each round selects a vertex of minimum weighted degree among the
    remaining candidates (ties drawn uniformly from the seeded stream) and
    removes it plus its neighborhood. Degrees are recomputed over the
    shrinking candidate set. The result is always maximal.

    seed may be an int or a numpy Generator; the default makes repeated
    calls reproducible.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = _greedy_select(g.adjacency, g.weights, rng.random(g.n))
    vertices = np.flatnonzero(mask)
    return IndependentSet(tuple(int(v) for v in vertices), float(g.weights[vertices].sum()))


def exact_mwis(g: NeighborhoodGraph) -> IndependentSet:
    """Exact maximum-weight independent set by branch and bound.

    Guarded to n <= MAX_EXACT_MWIS vertices; larger graphs must go through
    the greedy or annealing route. Weight ties resolve to the
    lexicographically smallest vertex tuple.
    """
    n = g.n
    if n > MAX_EXACT_MWIS:
        raise GuardError(
            f"exact_mwis handles at most {MAX_EXACT_MWIS} vertices, got {n}; "
            "use greedy_mwis or the annealing route"
        )
    w = g.weights
    closed = []  # vertex plus neighborhood, as bitmasks
    for v in range(n):
        mask = 1 << v
        for u in np.flatnonzero(g.adjacency[v]):
            mask |= 1 << int(u)
        closed.append(mask)

    best_w = -np.inf
    best_set: tuple[int, ...] | None = None

    def visit(cand: int, cur_w: float, cur: list[int], rem_w: float):
        nonlocal best_w, best_set
        if cur_w + rem_w < best_w:
            return
        if cand == 0:
            if cur_w > best_w or (cur_w == best_w and tuple(cur) < best_set):
                best_w = cur_w
                best_set = tuple(cur)
            return
        v = (cand & -cand).bit_length() - 1
        removed = cand & closed[v]
        lost = 0.0
        m = removed
        while m:
            lost += w[(m & -m).bit_length() - 1]
            m &= m - 1
        cur.append(v)
        visit(cand & ~removed, cur_w + float(w[v]), cur, rem_w - lost)
        cur.pop()
        visit(cand & ~(1 << v), cur_w, cur, rem_w - float(w[v]))

    visit((1 << n) - 1, 0.0, [], float(w.sum()))
    return IndependentSet(best_set, float(best_w))


def _subset_coords(ds: WeightedDataset, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64).ravel()
    if ids.size and (ids.min() < 0 or ids.max() >= ds.n):
        raise ValidationError("point id out of range")
    return ds.coords[ids]


def is_eps_separated(ds: WeightedDataset, ids, epsilon: float) -> bool:
    """True iff every distinct pair in ids is at distance >= epsilon."""
    coords = _subset_coords(ds, ids)
    if coords.shape[0] < 2:
        return True
    dist = pairwise_distances(ds.metric, coords)
    off_diag = ~np.eye(coords.shape[0], dtype=bool)
    return bool(dist[off_diag].min() >= epsilon)


def is_eps_dense(ds: WeightedDataset, ids, universe, epsilon: float) -> bool:
    """True iff every point of universe is strictly within epsilon of ids."""
    universe_coords = _subset_coords(ds, universe)
    if universe_coords.shape[0] == 0:
        return True
    coords = _subset_coords(ds, ids)
    if coords.shape[0] == 0:
        return False
    dist = pairwise_distances(ds.metric, universe_coords, coords)
    return bool(dist.min(axis=1).max() < epsilon)
