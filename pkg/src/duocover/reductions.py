"""Reductions between hitting set, single coverage and double coverage.

These constructions turn a hitting-set question into a single-coverage
(one cheapest parent) decision instance, and a single-coverage instance
into a double-coverage (two cheapest parents) one by adding a universally
cheapest extra column.  They double as fuzzing oracles for the solver:
the optimal values of an instance and its transform differ by an exactly
known offset, so disagreement pinpoints a bug on one side.

All cost matrices here are abstract bipartite costs (no geometry), which
is why the solver accepts raw matrices as well as planar instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

ENUMERATION_LIMIT = 20  # max |B| accepted by the subset-enumeration solvers


@dataclass(frozen=True)
class HittingSetInstance:
    """Does some size-m subset of the universe intersect every set?"""

    universe_size: int
    sets: tuple[frozenset[int], ...]
    m: int

    def __post_init__(self):
        if self.m < 0 or self.m > self.universe_size:
            raise ValueError("budget m must be within 0..universe_size")
        for s in self.sets:
            for e in s:
                if not 0 <= e < self.universe_size:
                    raise ValueError(f"element {e} outside universe")


@dataclass(frozen=True)
class ScpInstance:
    """Single coverage: open k columns, pay each row's cheapest; is opt <= phi?"""

    costs: tuple[tuple[float, ...], ...]
    k: int
    phi: float

    def __post_init__(self):
        widths = {len(r) for r in self.costs}
        if len(widths) > 1:
            raise ValueError("cost rows must have equal length")
        if self.costs and not 1 <= self.k <= len(self.costs[0]):
            raise ValueError("k must be within 1..|B|")
        for row in self.costs:
            for v in row:
                if not math.isfinite(v):
                    raise ValueError("costs must be finite")

    @property
    def n_rows(self) -> int:
        return len(self.costs)

    @property
    def n_cols(self) -> int:
        return len(self.costs[0]) if self.costs else 0


@dataclass(frozen=True)
class DcpInstance:
    """Double coverage: open k columns, pay each row's two cheapest."""

    costs: tuple[tuple[float, ...], ...]
    k: int
    phi: float

    @property
    def n_rows(self) -> int:
        return len(self.costs)

    @property
    def n_cols(self) -> int:
        return len(self.costs[0]) if self.costs else 0


def hitting_set_to_scp(hs: HittingSetInstance) -> ScpInstance:
    """One row per set, one column per element; cost 0 on membership else 1.

    The transformed instance has a cost-0 solution exactly when a hitting
    set of size m exists, so the threshold is phi = 0 with k = m.
    """
    costs = tuple(
        tuple(0.0 if j in s else 1.0 for j in range(hs.universe_size))
        for s in hs.sets)
    return ScpInstance(costs=costs, k=hs.m, phi=0.0)


def beta_below_costs(costs) -> float:
    """A value strictly below every cost entry.

    Stays clear by at least 1 (or a relative margin for large magnitudes) so
    downstream comparisons are unambiguous; negative when the minimum is 0.
    """
    cmin = min(min(row) for row in costs)
    return cmin - max(1.0, abs(cmin) * 1e-3)


def scp_to_dcp(scp: ScpInstance) -> tuple[DcpInstance, float]:
    """Append a universally cheapest column s and raise the budget by one.

    Every row's cheapest parent in the transform is forced to be s, so the
    double-coverage optimum is the single-coverage optimum plus |A| * beta,
    and the decision thresholds shift accordingly.
    """
    beta = beta_below_costs(scp.costs)
    costs = tuple(tuple(row) + (beta,) for row in scp.costs)
    return (DcpInstance(costs=costs, k=scp.k + 1,
                        phi=scp.phi + scp.n_rows * beta), beta)


# ---------------------------------------------------------------------------
# Enumeration solvers (deliberately independent of the branch-and-bound
# module; these are the oracles the solver is checked against).
# ---------------------------------------------------------------------------

def solve_hitting_set(hs: HittingSetInstance) -> bool:
    """Decide by trying every subset of size m (hitting is superset-monotone)."""
    if not hs.sets:
        return True
    if any(not s for s in hs.sets):
        return False
    for combo in itertools.combinations(range(hs.universe_size), hs.m):
        chosen = set(combo)
        if all(chosen & s for s in hs.sets):
            return True
    return False


def solve_scp(scp: ScpInstance) -> tuple[bool, float]:
    """Exact single-coverage decision and optimum by subset enumeration."""
    if scp.n_cols > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration supports up to {ENUMERATION_LIMIT} columns")
    best = math.inf
    for combo in itertools.combinations(range(scp.n_cols), scp.k):
        total = sum(min(row[j] for j in combo) for row in scp.costs)
        if total < best:
            best = total
    return best <= scp.phi, best


def solve_dcp_enumeration(dcp: DcpInstance) -> tuple[bool, float]:
    """Exact double-coverage decision and optimum by subset enumeration."""
    if dcp.n_cols > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration supports up to {ENUMERATION_LIMIT} columns")
    if dcp.k < 2:
        return False, math.inf
    best = math.inf
    for combo in itertools.combinations(range(dcp.n_cols), dcp.k):
        total = 0.0
        for row in dcp.costs:
            a, b = sorted(row[j] for j in combo)[:2]
            total += a + b
        if total < best:
            best = total
    return best <= dcp.phi, best


def dcp_cost_matrix(dcp: DcpInstance) -> np.ndarray:
    """Dense matrix view for feeding the branch-and-bound solver."""
    return np.array(dcp.costs, dtype=float)


# ---------------------------------------------------------------------------
# Random instance generators; integer costs keep all the identity checks
# exact in double precision.
# ---------------------------------------------------------------------------

def random_hitting_set_instance(rng: np.random.Generator,
                                max_universe: int = 8,
                                max_sets: int = 8) -> HittingSetInstance:
    u = int(rng.integers(2, max_universe + 1))
    n_sets = int(rng.integers(1, max_sets + 1))
    sets = []
    for _ in range(n_sets):
        size = int(rng.integers(1, u + 1))
        sets.append(frozenset(rng.choice(u, size=size, replace=False).tolist()))
    m = int(rng.integers(1, u + 1))
    return HittingSetInstance(universe_size=u, sets=tuple(sets), m=m)


def random_scp_instance(rng: np.random.Generator,
                        max_rows: int = 6, max_cols: int = 6,
                        cost_range: int = 100) -> ScpInstance:
    rows = int(rng.integers(1, max_rows + 1))
    cols = int(rng.integers(2, max_cols + 1))
    costs = tuple(tuple(float(v) for v in rng.integers(0, cost_range + 1, size=cols))
                  for _ in range(rows))
    k = int(rng.integers(1, cols))  # leave room for the extra transform column
    # pick phi near the optimum so both YES and NO decisions occur
    _, opt = solve_scp(ScpInstance(costs=costs, k=k, phi=0.0))
    phi = float(opt + rng.integers(-5, 6))
    return ScpInstance(costs=costs, k=k, phi=phi)
