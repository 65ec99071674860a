"""Exact and candidate-restricted optimisation of dual-parented placement.

The native method is best-first branch and bound over include/exclude
decisions on candidate columns.  Once the open set M is fixed the optimal
assignment is forced (each site takes its two cheapest open nodes), so no
relaxation is needed for correctness.  Each node carries the larger of two
admissible lower bounds:

* the structural bound: with open set O and undecided set U, the sum over
  sites of the two cheapest costs over O | U (it can only grow as columns
  are excluded);
* a Lagrangian bound: the per-site choose-two constraints are priced by
  multipliers tuned once at the root by subgradient ascent, after which
  every node's bound is a cheap selection over fixed column prices.  The
  same prices drive reduced-cost fixing, which permanently closes (or
  opens) columns that provably cannot change the optimum.

The structural bound alone is too loose to close realistic instances; the
Lagrangian bound is what makes exact solves at a few hundred sites
practical.  Both are plain lower bounds, so optimality proofs are exact.

The solver works on arbitrary bipartite cost matrices (entries of +inf mark
forbidden site/column pairs); the geometric instance is one front end, the
abstract reduction instances another.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .clustering import (CandidateMap, cluster_medoids,
                         compute_overlapping_clusters)
from .core import Allocation, Instance

# Seed of the internal clustering run used only to warm-start the search;
# fixed so repeated solves of the same instance are identical.
WARM_START_SEED = 229

# Open best-first nodes are compacted/trimmed beyond this heap size.  Trimming
# drops the worst-bound half but records the smallest dropped bound, so
# optimality is still claimed only when provable.
HEAP_SOFT_LIMIT = 1_000_000

_TIME_CHECK_MASK = 0xFF


class SolveStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    TIMED_OUT = "TimedOut"


@dataclass(frozen=True)
class SolveResult:
    status: SolveStatus
    allocation: Allocation | None
    bound: float            # best lower bound at termination
    nodes_explored: int
    wall_time: float

    def to_json(self, include_timings: bool = True) -> str:
        """Stable JSON rendering; timings become null when suppressed."""
        alloc = self.allocation
        payload = {
            "status": self.status.value,
            "total_cost": alloc.total_cost if alloc else None,
            "open": list(alloc.open) if alloc else None,
            "primary": list(alloc.primary) if alloc else None,
            "secondary": list(alloc.secondary) if alloc else None,
            "bound": self.bound if math.isfinite(self.bound) else None,
            "nodes_explored": self.nodes_explored,
            "wall_time": self.wall_time if include_timings else None,
        }
        return json.dumps(payload, indent=2) + "\n"


@dataclass(frozen=True)
class FeasibilityResult:
    """Outcome of the double-coverage feasibility check.

    ``witness`` is an open set of size k covering every site twice when
    feasible; ``certificate`` is a site subset whose requirements cannot be
    met otherwise (sites with fewer than two candidates when any exist;
    minimal certificates are not computed).
    """

    feasible: bool
    witness: tuple[int, ...] | None = None
    certificate: tuple[int, ...] | None = None

    def __bool__(self) -> bool:
        return self.feasible


# ---------------------------------------------------------------------------
# Feasibility: does an open set M of size k with |Pos(i) & M| >= 2 exist?
# ---------------------------------------------------------------------------

def check_feasible(n: int, k: int, candidates: CandidateMap,
                   time_limit: float | None = None) -> FeasibilityResult:
    """Exact feasibility decision for a candidate-restricted instance.

    Near the feasibility threshold the decision is genuinely hard and the
    search may take long; a ``time_limit`` turns that into a TimeoutError
    instead of an open-ended run.
    """
    candidates.validate_ids(n)
    pos = [set(p) for p in candidates.pos]

    if k > n or k < 2:
        return FeasibilityResult(False, certificate=tuple(range(n)))
    short = tuple(i for i in range(n) if len(pos[i]) < 2)
    if short:
        return FeasibilityResult(False, certificate=short)

    witness = _greedy_cover(pos, k)
    if witness is None:
        deadline = time.perf_counter() + time_limit if time_limit is not None else None
        witness = _cover_search(pos, k, deadline)
    if witness is None:
        return FeasibilityResult(False, certificate=tuple(range(n)))
    return FeasibilityResult(True, witness=_pad_to_k(witness, k, n))


def _pad_to_k(chosen: set[int], k: int, n: int) -> tuple[int, ...]:
    out = set(chosen)
    for j in range(n):
        if len(out) == k:
            break
        out.add(j)
    return tuple(sorted(out))


def _greedy_cover(pos: list[set[int]], k: int) -> set[int] | None:
    """Greedy double-cover attempt; None means inconclusive, not infeasible."""
    need = [2] * len(pos)
    chosen: set[int] = set()
    while any(need) and len(chosen) < k:
        gain: dict[int, int] = {}
        for i, req in enumerate(need):
            if req:
                for j in pos[i]:
                    if j not in chosen:
                        gain[j] = gain.get(j, 0) + 1
        if not gain:
            return None
        best = min(gain, key=lambda j: (-gain[j], j))
        chosen.add(best)
        for i in range(len(pos)):
            if need[i] and best in pos[i]:
                need[i] -= 1
    return chosen if not any(need) else None


def _cover_search(pos: list[set[int]], k: int,
                  deadline: float | None = None) -> set[int] | None:
    """DPLL-style exact search: branch on the highest-coverage column.

    Propagation: a site whose remaining free candidates exactly match its
    remaining demand forces them all in; overshooting k, starving a site,
    or an insufficient coverage count (the top remaining columns cannot
    supply the outstanding demand) prunes the branch.
    """
    n = len(pos)
    ticks = 0
    stack: list[tuple[frozenset[int], frozenset[int]]] = [(frozenset(), frozenset())]
    while stack:
        ticks += 1
        if deadline is not None and (ticks & 0x3F) == 0 and time.perf_counter() > deadline:
            raise TimeoutError("feasibility undecided within the time limit")
        included, excluded = stack.pop()
        inc = set(included)
        conflict = False
        while True:
            if len(inc) > k:
                conflict = True
                break
            forced: set[int] = set()
            max_need = 0
            total_need = 0
            cover: dict[int, int] = {}
            for i in range(n):
                sel = len(pos[i] & inc)
                if sel >= 2:
                    continue
                free = pos[i] - inc - excluded
                need = 2 - sel
                if need > len(free):
                    conflict = True
                    break
                if need == len(free):
                    forced |= free
                max_need = max(max_need, need)
                total_need += need
                for j in free:
                    cover[j] = cover.get(j, 0) + 1
            if conflict:
                break
            budget = k - len(inc)
            if max_need > budget:
                conflict = True
                break
            if total_need > 0:
                top = sorted(cover.values(), reverse=True)[:budget]
                if sum(top) < total_need:
                    conflict = True
                    break
            if not forced:
                break
            inc |= forced
        if conflict:
            continue

        if not cover:
            return inc
        # branch on the highest-coverage free column: including it serves
        # the most sites, excluding it weakens the counting bound fastest
        col = min(cover, key=lambda j: (-cover[j], j))
        stack.append((frozenset(inc), excluded | {col}))
        stack.append((frozenset(inc | {col}), excluded))
    return None


# ---------------------------------------------------------------------------
# Two-cheapest machinery shared by bounds, leaf values, and the public
# lower-bound helper.
# ---------------------------------------------------------------------------

class _TwoCheapest:
    """Per-row column orders of a cost matrix, queried against a column mask."""

    def __init__(self, c: np.ndarray):
        self.c = c
        self.n, self.m = c.shape
        self.order = np.argsort(c, axis=1, kind="stable")
        self.sorted_costs = np.take_along_axis(c, self.order, axis=1)
        self.rows = np.arange(self.n)
        self._alive = np.empty(self.m, dtype=bool)

    def total(self, alive: np.ndarray) -> float:
        """Sum over rows of the two cheapest entries among alive columns.

        +inf when some row has fewer than two finite alive entries.
        """
        a = alive[self.order]
        i1 = a.argmax(axis=1)
        first = self.sorted_costs[self.rows, i1]
        a[self.rows, i1] = False
        i2 = a.argmax(axis=1)
        second = self.sorted_costs[self.rows, i2]
        s = first + second
        if not np.isfinite(s).all():
            return math.inf
        return float(s.sum())

    def alive_from_excluded(self, excluded_mask: int) -> np.ndarray:
        alive = self._alive
        alive.fill(True)
        while excluded_mask:
            low = excluded_mask & -excluded_mask
            alive[low.bit_length() - 1] = False
            excluded_mask ^= low
        return alive

    def alive_from_open(self, open_mask: int) -> np.ndarray:
        alive = self._alive
        alive.fill(False)
        while open_mask:
            low = open_mask & -open_mask
            alive[low.bit_length() - 1] = True
            open_mask ^= low
        return alive


def two_cheapest_lower_bound(c: np.ndarray, excluded: Iterable[int] = ()) -> float:
    """Sum over rows of the two cheapest costs over non-excluded columns.

    This is the node bound the branch-and-bound search uses (alive columns
    are the open plus undecided ones); it never exceeds the optimum of any
    completion that avoids ``excluded``.
    """
    c = np.asarray(c, dtype=float)
    tc = _TwoCheapest(c)
    alive = np.ones(c.shape[1], dtype=bool)
    for j in excluded:
        alive[j] = False
    return tc.total(alive)


# ---------------------------------------------------------------------------
# Warm starts: greedy forward selection plus single-swap polish.
# ---------------------------------------------------------------------------

_UNCOVERED_PENALTY = 1e18


def _greedy_open(c: np.ndarray, k: int) -> list[int]:
    """Pick k columns greedily minimising the running two-cheapest total.

    Rows not yet covered twice count at a large penalty, so the first picks
    maximise coverage; ties break to the lower column id.
    """
    n, m = c.shape
    best1 = np.full(n, np.inf)
    best2 = np.full(n, np.inf)
    chosen: list[int] = []
    for _ in range(k):
        nb1 = np.minimum(c, best1[:, None])
        nb2 = np.minimum(np.maximum(c, best1[:, None]), best2[:, None])
        scores = (np.where(np.isfinite(nb1), nb1, _UNCOVERED_PENALTY)
                  + np.where(np.isfinite(nb2), nb2, _UNCOVERED_PENALTY)).sum(axis=0)
        if chosen:
            scores[chosen] = np.inf
        j = int(scores.argmin())
        chosen.append(j)
        cj = c[:, j]
        best2 = np.minimum(np.maximum(cj, best1), best2)
        best1 = np.minimum(cj, best1)
    return chosen


def _swap_improve(c: np.ndarray, open_cols: list[int], max_passes: int = 12) -> list[int]:
    """First-improvement single swaps until a local optimum (or pass cap)."""
    n, m = c.shape
    open_cols = list(open_cols)
    if len(open_cols) < 2 or len(open_cols) >= m:
        return open_cols

    def value_of(cols: list[int]) -> float:
        sub = c[:, cols]
        two = np.partition(sub, 1, axis=1)[:, :2].sum(axis=1)
        return float(two.sum()) if np.isfinite(two).all() else math.inf

    current = value_of(open_cols)
    for _ in range(max_passes):
        sub = c[:, open_cols]
        pad = min(3, len(open_cols))
        ord3 = np.argsort(sub, axis=1, kind="stable")[:, :pad]
        vals = np.take_along_axis(sub, ord3, axis=1)
        if pad < 3:
            vals = np.hstack([vals, np.full((n, 3 - pad), np.inf)])
            ord3 = np.hstack([ord3, np.full((n, 3 - pad), -1, dtype=int)])
        col_of = np.array(open_cols + [-1])
        o1, o2 = col_of[ord3[:, 0]], col_of[ord3[:, 1]]
        t1, t2, t3 = vals[:, 0], vals[:, 1], vals[:, 2]

        closed = np.array(sorted(set(range(m)) - set(open_cols)), dtype=int)
        best_delta = -1e-9 * max(current, 1.0)
        best_swap = None
        for j_out in open_cols:
            r1 = np.where(o1 == j_out, t2, t1)
            r2 = np.where(o1 == j_out, t3, np.where(o2 == j_out, t3, t2))
            x = c[:, closed]
            new1 = np.minimum(r1[:, None], x)
            new2 = np.minimum(np.maximum(r1[:, None], x), r2[:, None])
            totals = (new1 + new2).sum(axis=0)
            totals = np.where(np.isfinite(totals), totals, np.inf)
            idx = int(totals.argmin())
            delta = float(totals[idx]) - current
            if delta < best_delta:
                best_delta = delta
                best_swap = (j_out, int(closed[idx]))
        if best_swap is None:
            break
        j_out, j_in = best_swap
        open_cols[open_cols.index(j_out)] = j_in
        current = value_of(open_cols)
    return open_cols


# ---------------------------------------------------------------------------
# Lagrangian pricing: relax the per-site "pick exactly two parents"
# constraints with multipliers lam.  For any lam the value
#
#   2 * sum(lam) + sum of the k most negative column prices rho_j,
#   rho_j = sum_i min(0, c_ij - lam_i)
#
# is a lower bound on the optimum; forbidden pairs price at 0 and never
# contribute.  Multipliers are tuned once by subgradient ascent and reused
# at every search node.
# ---------------------------------------------------------------------------

def lagrangian_ascent(c: np.ndarray, k: int, ub: float,
                      iterations: int = 1000) -> tuple[np.ndarray, np.ndarray, float]:
    """Tune multipliers; returns (lam, column prices rho, root bound).

    Polyak steps against the incumbent value; on a stall the step scale
    decays and the multipliers restart from the best point seen, which in
    practice closes most of the duality gap within the iteration budget.
    """
    n, m = c.shape
    sc = np.sort(np.where(np.isfinite(c), c, np.inf), axis=1)
    lam = sc[:, min(2, m - 1)].copy()
    lam[~np.isfinite(lam)] = 0.0

    best_l = -math.inf
    best_lam = lam.copy()
    theta = 1.0
    stall = 0
    for _ in range(iterations):
        red = c - lam[:, None]
        rho = np.minimum(red, 0.0).sum(axis=0)
        chosen = np.argsort(rho, kind="stable")[:k]
        value = 2.0 * lam.sum() + rho[chosen].sum()
        if value > best_l + 1e-12 * max(1.0, abs(value)):
            best_l = value
            best_lam = lam.copy()
            stall = 0
        else:
            stall += 1
            if stall >= 20:
                theta *= 0.7
                stall = 0
                lam = best_lam.copy()
                if theta < 1e-5:
                    break
                continue
        g = 2.0 - (red[:, chosen] < 0).sum(axis=1)
        gnorm = float((g * g).sum())
        if gnorm < 1e-12:
            break
        gap = ub - value if math.isfinite(ub) else max(abs(value), 1.0)
        step = theta * max(gap, 1e-10) / gnorm
        lam = lam + step * g

    red = c - best_lam[:, None]
    rho = np.minimum(red, 0.0).sum(axis=0)
    root = float(2.0 * best_lam.sum() + np.sort(rho, kind="stable")[:k].sum())
    return best_lam, rho, root


def lagrangian_node_bound(rho: np.ndarray, lam_term: float, k: int,
                          included: Iterable[int], excluded: Iterable[int]) -> float:
    """Bound with columns in ``included`` forced open and ``excluded`` closed."""
    inc = set(included)
    exc = set(excluded)
    total = lam_term + sum(float(rho[j]) for j in inc)
    need = k - len(inc)
    if need < 0:
        return math.inf
    order = np.argsort(rho, kind="stable")
    for j in order:
        if need == 0:
            break
        j = int(j)
        if j in inc or j in exc:
            continue
        total += float(rho[j])
        need -= 1
    return total if need == 0 else math.inf


# ---------------------------------------------------------------------------
# Branch and bound over a (possibly masked) cost matrix.
# ---------------------------------------------------------------------------

def solve_matrix(c: np.ndarray, k: int, time_limit: float | None = None,
                 warm_starts: Sequence[Iterable[int]] = ()) -> SolveResult:
    """Minimise the summed two-cheapest allocation over k open columns.

    ``c`` may contain +inf for forbidden pairs.  ``warm_starts`` are column
    sets evaluated for the initial incumbent.  TimedOut results carry the
    incumbent and the best global lower bound at expiry.
    """
    start = time.perf_counter()
    c = np.asarray(c, dtype=float)
    n, m_all = c.shape
    if k > m_all:
        raise ValueError(f"k={k} exceeds the number of columns ({m_all})")
    if k < 2 or n == 0:
        return SolveResult(SolveStatus.INFEASIBLE, None, math.inf, 0,
                           time.perf_counter() - start)
    finite = np.isfinite(c)
    if (finite.sum(axis=1) < 2).any():
        return SolveResult(SolveStatus.INFEASIBLE, None, math.inf, 0,
                           time.perf_counter() - start)

    useful = np.flatnonzero(finite.any(axis=0))
    k_eff = min(k, len(useful))
    if k_eff < 2:
        return SolveResult(SolveStatus.INFEASIBLE, None, math.inf, 0,
                           time.perf_counter() - start)
    reduced = np.ascontiguousarray(c[:, useful])
    to_original = {r: int(j) for r, j in enumerate(useful)}
    from_original = {int(j): r for r, j in enumerate(useful)}

    warm_reduced = []
    for ws in warm_starts:
        cols = sorted({from_original[j] for j in ws if int(j) in from_original})
        if cols:
            warm_reduced.append(cols)

    status, open_reduced, value, bound, nodes = _branch_and_bound(
        reduced, k_eff, time_limit, warm_reduced, start)

    wall = time.perf_counter() - start
    if status is SolveStatus.INFEASIBLE or open_reduced is None:
        if status is not SolveStatus.INFEASIBLE:
            return SolveResult(status, None, bound, nodes, wall)
        return SolveResult(SolveStatus.INFEASIBLE, None, math.inf, nodes, wall)

    open_original = {to_original[r] for r in open_reduced}
    open_full = _pad_to_k(open_original, k, m_all)
    allocation = _allocation_from_matrix(c, open_full)
    if status is SolveStatus.OPTIMAL:
        bound = allocation.total_cost
    else:
        bound = min(bound, allocation.total_cost)
    return SolveResult(status, allocation, bound, nodes, wall)


def _allocation_from_matrix(c: np.ndarray, open_cols: tuple[int, ...]) -> Allocation:
    """Two-cheapest assignment over the open columns, ties to the lower id."""
    cols = np.array(sorted(open_cols), dtype=int)
    sub = c[:, cols]
    rows = np.arange(c.shape[0])
    p = sub.argmin(axis=1)
    v1 = sub[rows, p]
    sub2 = sub.copy()
    sub2[rows, p] = np.inf
    s = sub2.argmin(axis=1)
    v2 = sub2[rows, s]
    return Allocation(open=tuple(int(j) for j in cols),
                      primary=tuple(int(cols[i]) for i in p),
                      secondary=tuple(int(cols[i]) for i in s),
                      total_cost=float((v1 + v2).sum()))


def _branch_order(c: np.ndarray) -> list[int]:
    """Columns by descending coverage score: excluding a strong column early
    lifts subtree bounds fastest."""
    with np.errstate(divide="ignore"):
        prox = np.where(np.isfinite(c), 1.0 / (1.0 + c), 0.0)
    scores = prox.sum(axis=0)
    return sorted(range(c.shape[1]), key=lambda j: (-scores[j], j))


def _value_of_open(c: np.ndarray, cols: Sequence[int]) -> float:
    sub = c[:, list(cols)]
    two = np.partition(sub, 1, axis=1)[:, :2].sum(axis=1)
    return float(two.sum()) if np.isfinite(two).all() else math.inf


def _branch_and_bound(c, k, time_limit, warm_starts, start):
    """Search over columns of ``c`` (all indices in this matrix's space).

    Returns (status, open column set or None, value, lower bound, nodes).
    """
    n, m = c.shape
    deadline = start + time_limit if time_limit is not None else None

    # Incumbent from greedy + swap polish and any supplied warm starts.
    incumbent_val = math.inf
    incumbent_set: frozenset[int] | None = None

    def pad_cols(cols) -> list[int]:
        cols = list(dict.fromkeys(int(j) for j in cols))[:k]
        if len(cols) < k:
            have = set(cols)
            cols += [j for j in range(m) if j not in have][:k - len(cols)]
        return cols

    for cols in [_swap_improve(c, _greedy_open(c, k)), *map(pad_cols, warm_starts)]:
        v = _value_of_open(c, cols)
        if v < incumbent_val:
            incumbent_val = v
            incumbent_set = frozenset(cols)

    # Price columns once; fix those that provably cannot change the optimum.
    lam, rho, lagr_root = lagrangian_ascent(c, k, incumbent_val)
    lam_term = float(2.0 * lam.sum())
    margin = 1e-9 * max(1.0, abs(incumbent_val) if math.isfinite(incumbent_val) else 1.0)
    rho_rank = np.argsort(rho, kind="stable")
    prefix = np.concatenate([[0.0], np.cumsum(rho[rho_rank])])
    rank_of = np.empty(m, dtype=int)
    rank_of[rho_rank] = np.arange(m)

    closed: set[int] = set()
    must_open: set[int] = set()
    if math.isfinite(incumbent_val) and k < m:
        bound_open = np.where(rank_of < k, lagr_root,
                              lam_term + prefix[k - 1] + rho)
        bound_closed = np.where(rank_of < k,
                                lam_term + prefix[k + 1] - rho,
                                lagr_root)
        closed = {int(j) for j in np.flatnonzero(bound_open >= incumbent_val + margin)}
        must_open = {int(j) for j in np.flatnonzero(bound_closed >= incumbent_val + margin)}

    free = [j for j in range(m) if j not in closed]
    if len(must_open) > k or len(free) < k:
        # only reachable after fixing, i.e. with a finite incumbent: any
        # strictly better solution would violate the fixed columns
        return SolveStatus.OPTIMAL, incumbent_set, incumbent_val, incumbent_val, 0

    # Work in the compacted space of non-closed columns.
    keep = np.array(free, dtype=int)
    to_b = {ci: int(j) for ci, j in enumerate(keep)}
    cc = np.ascontiguousarray(c[:, keep])
    rho_c = rho[keep]
    rho_order_c = [int(j) for j in np.argsort(rho_c, kind="stable")]
    tc = _TwoCheapest(cc)
    inc0 = 0
    for j in must_open:
        inc0 |= 1 << int(np.searchsorted(keep, j))
    mc = len(free)

    order = [j for j in _branch_order(cc) if not (inc0 >> j) & 1]
    depth_total = len(order)
    decided_prefix = [0] * (depth_total + 1)
    for d, col in enumerate(order):
        decided_prefix[d + 1] = decided_prefix[d] | (1 << col)
    undecided_all = decided_prefix[depth_total]

    def set_of_mask(mask: int) -> frozenset[int]:
        out = []
        while mask:
            low = mask & -mask
            out.append(to_b[low.bit_length() - 1])
            mask ^= low
        return frozenset(out)

    def lagr_bound(inc_mask: int, excl_mask: int, b: int) -> float:
        total = lam_term
        mask = inc_mask
        while mask:
            low = mask & -mask
            total += rho_c[low.bit_length() - 1]
            mask ^= low
        need = k - b
        blocked = inc_mask | excl_mask
        for j in rho_order_c:
            if need == 0:
                break
            if (blocked >> j) & 1:
                continue
            total += rho_c[j]
            need -= 1
        return float(total) if need == 0 else math.inf

    def struct_bound(excl_mask: int) -> float:
        return tc.total(tc.alive_from_excluded(excl_mask))

    nodes = 0
    seq = itertools.count()
    heap: list[tuple[float, int, int, int, float]] = []
    min_trimmed = math.inf
    timed_out = False

    def consider_open_set(open_mask: int):
        nonlocal incumbent_val, incumbent_set, nodes
        nodes += 1
        v = tc.total(tc.alive_from_open(open_mask))
        if v < incumbent_val:
            incumbent_val = v
            incumbent_set = set_of_mask(open_mask)

    def finish_single(inc_mask: int, excl_mask: int):
        """Exactly one column missing: evaluate every completion at once."""
        nonlocal incumbent_val, incumbent_set, nodes
        nodes += 1
        open_cols = []
        mask = inc_mask
        while mask:
            low = mask & -mask
            open_cols.append(low.bit_length() - 1)
            mask ^= low
        cand = [j for j in range(mc)
                if not ((inc_mask | excl_mask) >> j) & 1]
        if not cand or len(open_cols) != k - 1:
            return
        sub = cc[:, open_cols]
        part = np.partition(sub, min(1, sub.shape[1] - 1), axis=1)
        b1 = part[:, 0]
        b2 = part[:, 1] if sub.shape[1] > 1 else np.full(n, np.inf)
        x = cc[:, cand]
        new1 = np.minimum(b1[:, None], x)
        new2 = np.minimum(np.maximum(b1[:, None], x), b2[:, None])
        totals = (new1 + new2).sum(axis=0)
        totals = np.where(np.isfinite(totals), totals, np.inf)
        idx = int(totals.argmin())
        if totals[idx] < incumbent_val:
            incumbent_val = float(totals[idx])
            incumbent_set = set_of_mask(inc_mask | (1 << cand[idx]))

    def emit(depth: int, inc_mask: int, bound: float, struct_val: float):
        b = inc_mask.bit_count()
        need = k - b
        rem = depth_total - depth
        if need == 0:
            consider_open_set(inc_mask)
            return
        if need > rem:
            return
        if need == rem:
            consider_open_set(inc_mask | (undecided_all & ~decided_prefix[depth]))
            return
        if bound < incumbent_val:
            heapq.heappush(heap, (bound, -depth, next(seq), inc_mask, struct_val))

    root_struct = struct_bound(0)
    if root_struct == math.inf:
        return SolveStatus.INFEASIBLE, None, math.inf, math.inf, 0
    root_bound = max(root_struct, lagr_bound(inc0, 0, inc0.bit_count()))
    emit(0, inc0, root_bound, root_struct)

    while heap:
        if deadline is not None and (nodes & _TIME_CHECK_MASK) == 0:
            if time.perf_counter() > deadline:
                timed_out = True
                break
        bound, ndepth, _, inc_mask, struct_val = heapq.heappop(heap)
        if bound >= incumbent_val:
            heap.clear()   # best-first: nothing left can improve
            break
        depth = -ndepth
        nodes += 1
        b = inc_mask.bit_count()

        if k - b == 1:
            finish_single(inc_mask, decided_prefix[depth] & ~inc_mask)
            continue

        col = order[depth]

        # include child: structural bound unchanged, pricing bound may rise
        inc_child = inc_mask | (1 << col)
        lb_inc = lagr_bound(inc_child, decided_prefix[depth + 1] & ~inc_child,
                            b + 1)
        emit(depth + 1, inc_child, max(struct_val, lb_inc), struct_val)

        # exclude child: both bounds need recomputation
        excl_mask = decided_prefix[depth + 1] & ~inc_mask
        lb_exc = lagr_bound(inc_mask, excl_mask, b)
        if lb_exc < incumbent_val:
            sb = struct_bound(excl_mask)
            if sb < incumbent_val:
                emit(depth + 1, inc_mask, max(sb, lb_exc), sb)

        if len(heap) > HEAP_SOFT_LIMIT:
            kept = [e for e in heap if e[0] < incumbent_val]
            if len(kept) > HEAP_SOFT_LIMIT // 2:
                kept.sort()
                min_trimmed = min(min_trimmed, kept[HEAP_SOFT_LIMIT // 2][0])
                kept = kept[:HEAP_SOFT_LIMIT // 2]
            heapq.heapify(kept)
            heap = kept

    open_set = incumbent_set if math.isfinite(incumbent_val) else None
    if timed_out:
        lb = min(incumbent_val, min_trimmed, heap[0][0] if heap else math.inf)
        return SolveStatus.TIMED_OUT, open_set, incumbent_val, lb, nodes
    if open_set is None:
        if min_trimmed < math.inf:
            return SolveStatus.TIMED_OUT, None, math.inf, min_trimmed, nodes
        return SolveStatus.INFEASIBLE, None, math.inf, math.inf, nodes
    if min_trimmed < incumbent_val:
        return SolveStatus.TIMED_OUT, open_set, incumbent_val, min_trimmed, nodes
    return SolveStatus.OPTIMAL, open_set, incumbent_val, incumbent_val, nodes


# ---------------------------------------------------------------------------
# Geometric front ends.
# ---------------------------------------------------------------------------

def _warm_start_sets(instance: Instance, k: int) -> list[list[int]]:
    """One overlapping-clustering run's medoids, deterministic seed."""
    if k < 2 or k > instance.n:
        return []
    rng = np.random.default_rng(WARM_START_SEED)
    state = compute_overlapping_clusters(instance, k, rng)
    medoids = sorted(set(cluster_medoids(instance, state)))
    return [medoids] if medoids else []


def solve_exact(instance: Instance, time_limit: float | None = None,
                warm_start: Iterable[int] | None = None) -> SolveResult:
    """Minimum-cost open set of size instance.k over all site positions."""
    return solve_restricted(instance, None, time_limit, warm_start=warm_start)


def solve_restricted(instance: Instance, candidates: CandidateMap | None,
                     time_limit: float | None = None,
                     warm_start: Iterable[int] | None = None) -> SolveResult:
    """Exact solve with each site parented only within its candidate set.

    ``candidates=None`` (or a FULL map) reduces to the unrestricted problem.
    A structurally infeasible candidate map yields status Infeasible rather
    than an exception.  ``warm_start`` seeds the incumbent with an extra
    open set (useful when sweeping growing candidate maps).
    """
    start = time.perf_counter()
    n, k = instance.n, instance.k
    if k < 2:
        return SolveResult(SolveStatus.INFEASIBLE, None, math.inf, 0,
                           time.perf_counter() - start)

    c = instance.cost_matrix()
    if candidates is not None:
        # The pre-check shares the caller's time budget; when it cannot
        # decide in time the solve reports TimedOut with no incumbent.
        try:
            feas = check_feasible(n, k, candidates, time_limit=time_limit)
        except TimeoutError:
            return SolveResult(SolveStatus.TIMED_OUT, None, -math.inf, 0,
                               time.perf_counter() - start)
        if not feas:
            return SolveResult(SolveStatus.INFEASIBLE, None, math.inf, 0,
                               time.perf_counter() - start)
        allowed = np.zeros((n, n), dtype=bool)
        for i, cands in enumerate(candidates.pos):
            allowed[i, sorted(cands)] = True
        c = np.where(allowed, c, np.inf)

    warm = _warm_start_sets(instance, k)
    if warm_start is not None:
        warm.append(sorted({instance._check_id(j) for j in warm_start}))
    result = solve_matrix(c, k, time_limit, warm_starts=warm)
    return SolveResult(result.status, result.allocation, result.bound,
                       result.nodes_explored, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Independent exhaustive oracle (kept free of the search machinery above).
# ---------------------------------------------------------------------------

def solve_by_enumeration(c: np.ndarray, k: int,
                         chunk: int = 16384) -> tuple[float, tuple[int, ...] | None]:
    """Try every k-subset of columns in lexicographic order.

    Returns (optimal value, lexicographically smallest optimal subset), or
    (inf, None) when no subset dual-covers every row.  Exhaustive by design:
    use only where C(m, k) is small.
    """
    c = np.asarray(c, dtype=float)
    n, m = c.shape
    if not 2 <= k <= m:
        return math.inf, None
    best_val = math.inf
    best: tuple[int, ...] | None = None
    combo_iter = itertools.combinations(range(m), k)
    while True:
        block = list(itertools.islice(combo_iter, chunk))
        if not block:
            break
        combos = np.array(block, dtype=int)          # (b, k)
        gathered = c[:, combos]                      # (n, b, k)
        two = np.partition(gathered, 1, axis=2)[:, :, :2].sum(axis=2)
        totals = two.sum(axis=0)                     # (b,)
        totals = np.where(np.isfinite(totals), totals, np.inf)
        idx = int(totals.argmin())
        if totals[idx] < best_val:
            best_val = float(totals[idx])
            best = tuple(int(j) for j in block[idx])
    return best_val, best
