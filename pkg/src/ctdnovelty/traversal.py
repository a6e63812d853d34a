"""Cognitive traversal distance: shortest walk visiting every focal term.

A walk may revisit nodes, so it is solved as a minimum open Hamiltonian path
(free endpoints) on the metric closure of the focal matrix. Paths up to
``exact_threshold`` nodes are solved exactly by Held-Karp; larger ones by
multi-start nearest neighbour followed by 2-opt and Or-opt, then a few
seeded double-bridge kicks on the incumbent.
"""

from __future__ import annotations

import enum
import itertools
import random
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .pairdist import FocalDistanceMatrix

DEFAULT_EXACT_THRESHOLD = 16
BRUTE_FORCE_MAX = 9
_TIE_TOL = 1e-12
_IMPROVE_TOL = 1e-12


class Solver(str, enum.Enum):
    BRUTE_FORCE = "brute_force"
    HELD_KARP = "held_karp"
    HEURISTIC = "heuristic"

    def __str__(self) -> str:
        return self.value


class TraversalTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class TraversalResult:
    length: float
    order: tuple[int, ...]
    exact: bool
    solver: Solver


def _as_matrix(m) -> np.ndarray:
    d = m.dist if isinstance(m, FocalDistanceMatrix) else m
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {d.shape}")
    return d


def path_length(d: np.ndarray, order) -> float:
    return float(sum(d[a, b] for a, b in zip(order, order[1:])))


def _canonical(order) -> tuple[int, ...]:
    order = tuple(int(x) for x in order)
    rev = order[::-1]
    return min(order, rev)


def metric_closure(m, return_successors: bool = False):
    """All-pairs shortest-path distances within the focal graph (Floyd-Warshall).

    With ``return_successors`` also returns ``nxt`` where ``nxt[i, j]`` is the
    first hop on a shortest i -> j route, for expanding closure edges back to walks.
    """
    d = _as_matrix(m).copy()
    n = len(d)
    nxt = np.tile(np.arange(n), (n, 1))
    for k in range(n):
        via = d[:, k, None] + d[None, k, :]
        better = via < d
        d = np.where(better, via, d)
        nxt = np.where(better, nxt[:, k, None], nxt)
    if return_successors:
        return d, nxt
    return d


def expand_walk(order, nxt: np.ndarray) -> list[int]:
    """Expand a closure path into the underlying walk over original edges."""
    if len(order) == 0:
        return []
    walk = [int(order[0])]
    for target in order[1:]:
        cur = walk[-1]
        while cur != target:
            cur = int(nxt[cur, target])
            walk.append(cur)
    return walk


def _trivial(n: int, solver: Solver) -> TraversalResult:
    return TraversalResult(0.0, tuple(range(n)), solver is not Solver.HEURISTIC, solver)


@njit(cache=True)
def held_karp_table(d: np.ndarray) -> np.ndarray:
    """dp[mask, j]: shortest path covering ``mask`` and ending at j (any start).

    The singleton base case dp[{j}, j] = 0 plays the role of a zero-cost virtual
    depot joined to every node, which turns the open path into a closed tour.
    """
    n = d.shape[0]
    full = 1 << n
    dp = np.full((full, n), np.inf)
    members = np.empty(n, dtype=np.int64)
    for j in range(n):
        dp[1 << j, j] = 0.0
    for mask in range(1, full):
        if mask & (mask - 1) == 0:
            continue
        c = 0
        for j in range(n):
            if (mask >> j) & 1:
                members[c] = j
                c += 1
        for a in range(c):
            j = members[a]
            prev = mask ^ (1 << j)
            best = np.inf
            for b in range(c):
                k = members[b]
                if k != j:
                    v = dp[prev, k] + d[k, j]
                    if v < best:
                        best = v
            dp[mask, j] = best
    return dp


def solve_exact(closed, max_n: int = DEFAULT_EXACT_THRESHOLD) -> TraversalResult:
    """Minimum open Hamiltonian path by Held-Karp; ties go to the lexicographically smallest order."""
    d = _as_matrix(closed)
    n = len(d)
    if n > max_n:
        raise TraversalTooLarge(f"{n} nodes exceeds exact threshold {max_n}")
    if n <= 1:
        return _trivial(n, Solver.HELD_KARP)
    dp = held_karp_table(np.ascontiguousarray(d))
    full = (1 << n) - 1
    best = float(dp[full].min())
    tol = _TIE_TOL * max(1.0, abs(best))

    # dp[mask, j] is also the best path over mask *starting* at j (symmetry),
    # so the order can be rebuilt front to back choosing the smallest feasible node.
    first = int(np.flatnonzero(dp[full] <= best + tol)[0])
    order = [first]
    mask, cur, remaining = full, first, float(dp[full, first])
    while len(order) < n:
        rest = mask ^ (1 << cur)
        for nxt in range(n):
            if rest >> nxt & 1 and dp[rest, nxt] + d[cur, nxt] <= remaining + tol:
                break
        remaining = float(dp[rest, nxt])
        order.append(nxt)
        mask, cur = rest, nxt
    return TraversalResult(path_length(d, order), tuple(order), True, Solver.HELD_KARP)


@lru_cache(maxsize=BRUTE_FORCE_MAX + 1)
def _undirected_orders(n: int) -> np.ndarray:
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    return perms[perms[:, 0] < perms[:, -1]]


def solve_brute(closed) -> TraversalResult:
    """Enumerate all n!/2 undirected orders (n <= 9). Test oracle."""
    d = _as_matrix(closed)
    n = len(d)
    if n > BRUTE_FORCE_MAX:
        raise TraversalTooLarge(f"brute force limited to {BRUTE_FORCE_MAX} nodes, got {n}")
    if n <= 1:
        return _trivial(n, Solver.BRUTE_FORCE)
    perms = _undirected_orders(n)
    lengths = d[perms[:, :-1], perms[:, 1:]].sum(axis=1)
    best = lengths.min()
    # permutations are generated in lexicographic order
    k = int(np.flatnonzero(lengths <= best + _TIE_TOL * max(1.0, abs(best)))[0])
    order = tuple(int(x) for x in perms[k])
    return TraversalResult(path_length(d, order), order, True, Solver.BRUTE_FORCE)


def _nearest_neighbour(d: np.ndarray, start: int, n: int) -> list[int]:
    path = [start]
    left = set(range(n)) - {start}
    while left:
        row = d[path[-1]]
        nxt = min(left, key=lambda j: (row[j], j))
        path.append(nxt)
        left.remove(nxt)
    return path


@njit(cache=True)
def _two_opt(d: np.ndarray, p: np.ndarray) -> bool:
    """One sweep of segment reversals on a depot-padded path. Returns True if improved."""
    improved = False
    m = p.shape[0]
    for i in range(1, m - 2):
        for j in range(i + 1, m - 1):
            a, b, c, e = p[i - 1], p[i], p[j], p[j + 1]
            delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
            if delta < -_IMPROVE_TOL:
                lo, hi = i, j
                while lo < hi:
                    p[lo], p[hi] = p[hi], p[lo]
                    lo += 1
                    hi -= 1
                improved = True
    return improved


@njit(cache=True)
def _or_opt(d: np.ndarray, p: np.ndarray) -> bool:
    """Relocate segments (optionally reversed) to their best position. Returns True if improved.

    Segment length is not capped at the classic 3; on paths of a few dozen
    nodes the longer moves are cheap and close most of the gap to optimal.
    """
    improved = False
    m = p.shape[0]
    rest = np.empty(m, dtype=np.int64)
    seg = np.empty(m, dtype=np.int64)
    for seg_len in range(1, m - 2):
        i = 1
        while i + seg_len <= m - 1:
            s0, s1 = p[i], p[i + seg_len - 1]
            before, after = p[i - 1], p[i + seg_len]
            removal = d[before, s0] + d[s1, after] - d[before, after]
            r = 0
            for q in range(i):
                rest[r] = p[q]
                r += 1
            for q in range(i + seg_len, m):
                rest[r] = p[q]
                r += 1
            best_gain, best_k, best_rev = _IMPROVE_TOL, -1, False
            for k in range(r - 1):
                if k == i - 1:
                    continue
                x, y = rest[k], rest[k + 1]
                base = d[x, y]
                fwd = d[x, s0] + d[s1, y] - base
                rev = d[x, s1] + d[s0, y] - base
                if removal - fwd > best_gain:
                    best_gain, best_k, best_rev = removal - fwd, k, False
                if removal - rev > best_gain:
                    best_gain, best_k, best_rev = removal - rev, k, True
            if best_k >= 0:
                for q in range(seg_len):
                    seg[q] = p[i + q]
                w = 0
                for q in range(best_k + 1):
                    p[w] = rest[q]
                    w += 1
                for q in range(seg_len):
                    p[w] = seg[seg_len - 1 - q] if best_rev else seg[q]
                    w += 1
                for q in range(best_k + 1, r):
                    p[w] = rest[q]
                    w += 1
                improved = True
            i += 1
    return improved


@njit(cache=True)
def _local_search_padded(d: np.ndarray, p: np.ndarray) -> None:
    while True:
        changed = _two_opt(d, p)
        if _or_opt(d, p):
            changed = True
        if not changed:
            break


def _local_search(d: np.ndarray, path: list[int], depot: int) -> list[int]:
    p = np.array([depot] + list(path) + [depot], dtype=np.int64)
    _local_search_padded(d, p)
    return [int(x) for x in p[1:-1]]


def _double_bridge(path: list[int], depot: int, rnd: random.Random) -> list[int]:
    tour = [depot] + path
    a, b, c = sorted(rnd.sample(range(1, len(tour)), 3))
    tour = tour[:a] + tour[b:c] + tour[a:b] + tour[c:]
    k = tour.index(depot)
    return tour[k + 1:] + tour[:k]


def solve_heuristic(closed, starts: int | None = None, seed: int = 0,
                    kicks: int | None = None) -> TraversalResult:
    """Best of nearest-neighbour starts, each improved by 2-opt and Or-opt to a local optimum.

    ``starts`` caps the number of start nodes (default: every node); when capped,
    the start nodes are a seeded random sample. The winner is then perturbed
    ``kicks`` times (default 4n) by a double-bridge move and re-optimised,
    keeping strict improvements.
    """
    d = _as_matrix(closed)
    n = len(d)
    if n <= 1:
        return _trivial(n, Solver.HEURISTIC)
    # virtual depot at index n, zero cost to every node
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = d

    nodes = list(range(n))
    if starts is not None and starts < n:
        nodes = sorted(random.Random(seed).sample(nodes, max(1, starts)))

    best_len, best_order = np.inf, None
    for s in nodes:
        path = _local_search(aug, _nearest_neighbour(aug, s, n), n)
        order = _canonical(path)
        length = path_length(d, order)
        if length < best_len - _TIE_TOL or (abs(length - best_len) <= _TIE_TOL and order < best_order):
            best_len, best_order = length, order

    rnd = random.Random(seed)
    for _ in range(4 * n if kicks is None else kicks):
        if n < 4:
            break
        path = _local_search(aug, _double_bridge(list(best_order), n, rnd), n)
        order = _canonical(path)
        length = path_length(d, order)
        if length < best_len - _TIE_TOL:
            best_len, best_order = length, order
    return TraversalResult(best_len, best_order, False, Solver.HEURISTIC)


def ctd(m, exact_threshold: int = DEFAULT_EXACT_THRESHOLD, starts: int | None = None,
        seed: int = 0, kicks: int | None = None) -> TraversalResult:
    """Closure, then Held-Karp up to ``exact_threshold`` nodes, heuristic beyond."""
    closed = metric_closure(m)
    if len(closed) <= exact_threshold:
        return solve_exact(closed, max_n=exact_threshold)
    return solve_heuristic(closed, starts=starts, seed=seed, kicks=kicks)


def format_debug(closed: np.ndarray, result: TraversalResult, labels=None) -> str:
    """Plain-text dump of a closure matrix and the chosen order."""
    n = len(closed)
    labels = list(labels) if labels is not None else [str(i) for i in range(n)]
    lines = ["\t" + "\t".join(labels)]
    for i in range(n):
        lines.append(labels[i] + "\t" + "\t".join(f"{closed[i, j]:.6g}" for j in range(n)))
    lines.append(f"order\t{'-'.join(labels[k] for k in result.order)}")
    lines.append(f"length\t{result.length:.12g}\t{result.solver}\texact={result.exact}")
    return "\n".join(lines)
