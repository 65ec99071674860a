"""Candidate-position generation for the placement solver.

Three strategies restrict where each site's metro node may be placed:

* overlapping weighted k-means, where every site belongs to the cluster of
  its closest mean (P) and of its second-closest mean (S), so each site is
  in exactly two clusters;
* cluster-based sampling (CBS): repeated overlapping-clustering runs whose
  per-cluster medoids become candidate positions for the cluster members;
* k-cheapest-neighbours (KCN): each site's ``neighbors`` cheapest columns.

CBS keeps the restricted problem satisfiable; KCN may not when the
neighbourhood is small.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .core import Instance

# Safety cap only; the strict-improvement rule terminates long before this.
MAX_CLUSTER_ITERATIONS = 10_000


class CandidateSource(enum.Enum):
    CBS = "cbs"
    KCN = "kcn"
    FULL = "full"


@dataclass(frozen=True)
class ClusterState:
    """Result of one overlapping-clustering run.

    ``means`` are the k mean positions the stored membership was scored
    against, so ``cost`` equals the weighted distance sum of every site to
    both of its means.  ``accepted_costs`` is the strictly decreasing
    sequence of accepted iteration costs.
    """

    means: np.ndarray                       # (k, 2), read-only
    P: tuple[frozenset[int], ...]           # closest-mean membership
    S: tuple[frozenset[int], ...]           # second-closest-mean membership
    cost: float
    accepted_costs: tuple[float, ...]


@dataclass(frozen=True)
class CandidateMap:
    """Per-site allowed metro-node positions."""

    pos: tuple[frozenset[int], ...]
    source: CandidateSource

    @property
    def n(self) -> int:
        return len(self.pos)

    @staticmethod
    def full(n: int) -> "CandidateMap":
        allsites = frozenset(range(n))
        return CandidateMap(pos=(allsites,) * n, source=CandidateSource.FULL)

    def validate_ids(self, n: int) -> None:
        if self.n != n:
            raise ValueError(f"candidate map covers {self.n} sites, instance has {n}")
        for i, cands in enumerate(self.pos):
            for j in cands:
                if not 0 <= j < n:
                    raise IndexError(f"site {i}: candidate id {j} out of range")


def compute_overlapping_clusters(instance: Instance, k: int,
                                 rng: np.random.Generator) -> ClusterState:
    """Weighted k-means variant where each site joins its two nearest means.

    Means start at k distinct random sites.  Each iteration assigns every
    site to its closest mean (ties: lowest cluster index) and second-closest
    mean (ties: next-lowest, so the two indices always differ), scores the
    assignment by the weighted distance to both means, and accepts only a
    strict improvement; means are then recomputed as weighted centroids of
    P_i | S_i (empty clusters keep their mean).  A plateau stops the loop.
    """
    n = instance.n
    if k < 2:
        raise ValueError("k must be at least 2: the second-closest mean is undefined otherwise")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of sites ({n})")

    xy = instance.xy
    w = instance.weights
    rows = np.arange(n)
    means = xy[rng.choice(n, size=k, replace=False)].astype(float)

    cost = np.inf
    accepted: list[float] = []
    best: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    for _ in range(MAX_CLUSTER_ITERATIONS):
        d = np.sqrt(((xy[:, None, :] - means[None, :, :]) ** 2).sum(axis=2))
        p_idx = d.argmin(axis=1)
        d2 = d.copy()
        d2[rows, p_idx] = np.inf
        s_idx = d2.argmin(axis=1)
        newcost = float((w * (d[rows, p_idx] + d[rows, s_idx])).sum())

        if not cost > newcost:
            break
        cost = newcost
        accepted.append(newcost)
        best = (means.copy(), p_idx, s_idx)

        # P and S memberships are disjoint per cluster, so the centroid sums
        # over P_i | S_i split into two bincounts.
        sw = np.bincount(p_idx, w, minlength=k) + np.bincount(s_idx, w, minlength=k)
        sx = (np.bincount(p_idx, w * xy[:, 0], minlength=k)
              + np.bincount(s_idx, w * xy[:, 0], minlength=k))
        sy = (np.bincount(p_idx, w * xy[:, 1], minlength=k)
              + np.bincount(s_idx, w * xy[:, 1], minlength=k))
        means = means.copy()
        nonempty = sw > 0
        means[nonempty, 0] = sx[nonempty] / sw[nonempty]
        means[nonempty, 1] = sy[nonempty] / sw[nonempty]
    else:
        raise RuntimeError("overlapping clustering did not converge within the iteration cap")

    assert best is not None  # first iteration always improves on +inf
    final_means, p_idx, s_idx = best
    final_means.setflags(write=False)
    P = tuple(frozenset(np.flatnonzero(p_idx == i).tolist()) for i in range(k))
    S = tuple(frozenset(np.flatnonzero(s_idx == i).tolist()) for i in range(k))
    return ClusterState(means=final_means, P=P, S=S, cost=cost,
                        accepted_costs=tuple(accepted))


def _medoid(xy: np.ndarray, w: np.ndarray,
            P_i: frozenset[int], S_i: frozenset[int]) -> int | None:
    """Best site of one cluster: minimises the weighted distance sum.

    The medoid is drawn from P_i and scored against all of P_i | S_i; when
    P_i is empty it is drawn from S_i and scored against S_i only.  Returns
    None for a cluster with no members.  Ties break to the lowest site id.
    """
    if P_i:
        cands = np.array(sorted(P_i), dtype=int)
        targets = np.array(sorted(P_i | S_i), dtype=int)
    elif S_i:
        cands = np.array(sorted(S_i), dtype=int)
        targets = cands
    else:
        return None
    d = np.sqrt(((xy[cands][:, None, :] - xy[targets][None, :, :]) ** 2).sum(axis=2))
    scores = d @ w[targets]
    return int(cands[int(scores.argmin())])


def cluster_medoids(instance: Instance, state: ClusterState) -> list[int]:
    """Medoid of every non-empty cluster of a clustering run."""
    out = []
    for P_i, S_i in zip(state.P, state.S):
        m = _medoid(instance.xy, instance.weights, P_i, S_i)
        if m is not None:
            out.append(m)
    return out


def _one_sampling_run(instance: Instance, k: int, rng: np.random.Generator):
    state = compute_overlapping_clusters(instance, k, rng)
    out = []
    for P_i, S_i in zip(state.P, state.S):
        m = _medoid(instance.xy, instance.weights, P_i, S_i)
        if m is not None:
            out.append((m, P_i | S_i))
    return out


def sampling_points(instance: Instance, nbruns: int, k: int,
                    rng: np.random.Generator, threads: int = 1) -> CandidateMap:
    """Cluster-based sampling: union of per-run cluster medoids.

    Runs ``nbruns`` independent overlapping-clustering runs; after each, the
    medoid of every cluster is added to Pos(x) for each member x of that
    cluster.  Each run gets its own child RNG stream keyed by the run index,
    so results are reproducible and independent of the thread count.
    """
    if nbruns < 1:
        raise ValueError("nbruns must be at least 1")
    n = instance.n
    streams = rng.spawn(nbruns)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            run_results = list(pool.map(
                lambda s: _one_sampling_run(instance, k, s), streams))
    else:
        run_results = [_one_sampling_run(instance, k, s) for s in streams]

    pos: list[set[int]] = [set() for _ in range(n)]
    for result in run_results:
        for medoid, members in result:
            for j in members:
                pos[j].add(medoid)
    return CandidateMap(pos=tuple(frozenset(p) for p in pos),
                        source=CandidateSource.CBS)


def kcn_candidates(instance: Instance, neighbors: int) -> CandidateMap:
    """Each site's ``neighbors`` cheapest node positions (ties: lower id).

    With neighbors = n this is the full map; small values may make the
    restricted problem infeasible.
    """
    n = instance.n
    if not 1 <= neighbors <= n:
        raise ValueError(f"neighbors must be in 1..{n}, got {neighbors}")
    pos = []
    for i in range(n):
        order = np.argsort(instance.cost_row(i), kind="stable")
        pos.append(frozenset(order[:neighbors].tolist()))
    return CandidateMap(pos=tuple(pos), source=CandidateSource.KCN)


# ---------------------------------------------------------------------------
# CandidateMap CSV: header `site_id,candidate_id`, one pair per line,
# sorted by (site, candidate).
# ---------------------------------------------------------------------------

def write_candidates_csv(cmap: CandidateMap, sink: str | TextIO) -> None:
    if isinstance(sink, str):
        with open(sink, "w", newline="") as fh:
            write_candidates_csv(cmap, fh)
        return
    sink.write("site_id,candidate_id\n")
    for i, cands in enumerate(cmap.pos):
        for j in sorted(cands):
            sink.write(f"{i},{j}\n")


def read_candidates_csv(source: str | TextIO, n: int,
                        source_kind: CandidateSource = CandidateSource.CBS) -> CandidateMap:
    """Read a candidate map for an n-site instance.

    The file does not record how the map was produced; ``source_kind``
    labels the result (it does not affect solving).
    """
    if isinstance(source, str):
        with open(source, "r", newline="") as fh:
            return read_candidates_csv(fh, n, source_kind)
    pos: list[set[int]] = [set() for _ in range(n)]
    header = source.readline().strip()
    if header != "site_id,candidate_id":
        raise ValueError(f"line 1: expected header 'site_id,candidate_id', got {header!r}")
    for ln, line in enumerate(source, start=2):
        line = line.strip()
        if not line:
            continue
        try:
            a, b = line.split(",")
            i, j = int(a), int(b)
        except ValueError:
            raise ValueError(f"line {ln}: expected 'site_id,candidate_id' pair") from None
        if not 0 <= i < n:
            raise ValueError(f"line {ln}: site id {i} out of range")
        if not 0 <= j < n:
            raise ValueError(f"line {ln}: candidate id {j} out of range")
        pos[i].add(j)
    cmap = CandidateMap(pos=tuple(frozenset(p) for p in pos), source=source_kind)
    return cmap
