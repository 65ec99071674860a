"""Instance generation, k-means downsampling, and the benchmark harness.

The master-instance generator stands in for proprietary operator data:
either uniform site placement or clustered towns with heavy-tailed loads.
``downsample`` shrinks a master instance into a representative family via
standard weighted k-means, conserving total load exactly (loads are
integer-valued).  The harness solves instance families with the exact and
candidate-restricted methods and emits gap/time tables plus the
neighbourhood-sweep data for the KCN trade-off curve.

Timings are recorded only on request: default harness output contains no
wall-clock fields, so fixed seeds give byte-identical CSVs.
"""

from __future__ import annotations

import enum
import io
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .clustering import kcn_candidates, sampling_points
from .core import ExchangeSite, Instance
from .solver import SolveStatus, check_feasible, solve_exact, solve_restricted

BOX_KM = 300.0  # side of the square region sites are drawn from


class SpatialProfile(enum.Enum):
    UNIFORM = "uniform"
    CLUSTERED_TOWNS = "clustered-towns"


class Method(enum.Enum):
    EXACT = "Exact"
    RESTRICTED_CBS = "RestrictedCBS"
    RESTRICTED_KCN = "RestrictedKCN"
    LP_EXPORT_ONLY = "LPExportOnly"


@dataclass(frozen=True)
class BenchRecord:
    """One harness cell: a (size, method) solve or one sweep row."""

    n: int
    k: int
    method: Method
    status: str
    value: float | None
    gap_percent: float | None
    time_s: float | None
    params: tuple[tuple[str, str], ...] = field(default_factory=tuple)


def default_alpha(load: float) -> float:
    """Fibre-sharing coefficient: decreases as the load grows."""
    return 1.0 / (1.0 + math.log10(load))


def generate_master(n: int, spatial_profile: SpatialProfile,
                    rng: np.random.Generator, k: int | None = None,
                    routing_factor: float = 1.6) -> Instance:
    """Synthetic master instance with heavy-tailed integer loads.

    CLUSTERED_TOWNS draws town centres uniformly in the box and scatters
    sites around them with per-town spread; UNIFORM draws sites iid.  Loads
    are rounded lognormals (>= 1), alphas follow :func:`default_alpha`.
    """
    if n < 2:
        raise ValueError("need at least two sites")
    if k is None:
        k = min(20, n)

    if spatial_profile is SpatialProfile.UNIFORM:
        xy = rng.uniform(0.0, BOX_KM, size=(n, 2))
    else:
        towns = max(2, int(round(math.sqrt(n))))
        centers = rng.uniform(0.0, BOX_KM, size=(towns, 2))
        weights = (1.0 / np.arange(1, towns + 1)) ** 0.8
        weights /= weights.sum()
        town_of = rng.choice(towns, size=n, p=weights)
        spread = rng.uniform(2.0, 6.0, size=towns)
        xy = centers[town_of] + rng.normal(size=(n, 2)) * spread[town_of][:, None]

    loads = np.maximum(1.0, np.round(rng.lognormal(mean=math.log(120.0),
                                                   sigma=1.1, size=n)))
    sites = [ExchangeSite(i, float(xy[i, 0]), float(xy[i, 1]),
                          float(loads[i]), default_alpha(float(loads[i])))
             for i in range(n)]
    return Instance(sites, k=k, routing_factor=routing_factor)


def downsample(instance: Instance, m: int, rng: np.random.Generator,
               max_iterations: int = 200) -> Instance:
    """Standard weighted k-means into m aggregate sites.

    Sites are weighted by alpha * load; each cluster becomes one site at
    its weighted centroid carrying the summed load and the load-weighted
    mean alpha, so total demand is conserved.  Clusters that end up empty
    (rare) are dropped.  The routing factor carries over, as does k, capped
    at the new site count when the instance shrinks below it.
    """
    n = instance.n
    if not 1 <= m <= n:
        raise ValueError(f"m must be in 1..{n}, got {m}")
    xy = instance.xy
    w = instance.weights
    centers = xy[rng.choice(n, size=m, replace=False)].astype(float)

    assign = None
    for _ in range(max_iterations):
        d2 = ((xy[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)  # ties: lowest cluster index
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        sw = np.bincount(assign, w, minlength=m)
        sx = np.bincount(assign, w * xy[:, 0], minlength=m)
        sy = np.bincount(assign, w * xy[:, 1], minlength=m)
        nonempty = sw > 0
        centers[nonempty, 0] = sx[nonempty] / sw[nonempty]
        centers[nonempty, 1] = sy[nonempty] / sw[nonempty]

    sites = []
    next_id = 0
    for cluster in range(m):
        members = np.flatnonzero(assign == cluster)
        if members.size == 0:
            continue
        wm = w[members]
        cx = float((xy[members, 0] * wm).sum() / wm.sum())
        cy = float((xy[members, 1] * wm).sum() / wm.sum())
        load = float(instance.loads[members].sum())
        alpha = float((instance.alphas[members] * instance.loads[members]).sum() / load)
        sites.append(ExchangeSite(next_id, cx, cy, load, alpha))
        next_id += 1
    return Instance(sites, k=min(instance.k, len(sites)),
                    routing_factor=instance.routing_factor)


# ---------------------------------------------------------------------------
# Benchmark harness.
# ---------------------------------------------------------------------------

def _method_stream(seed: int, size: int, method: Method) -> np.random.Generator:
    order = list(Method)
    return np.random.default_rng(np.random.SeedSequence(
        entropy=[int(seed), int(size), order.index(method)]))


def _params(**kv) -> tuple[tuple[str, str], ...]:
    return tuple((k, str(v)) for k, v in kv.items() if v is not None)


def run_table(master: Instance, sizes: Sequence[int], k: int,
              methods: Sequence[Method], *, seed: int, nbruns: int = 30,
              neighbors: int = 10, time_limit: float | None = None,
              include_times: bool = False,
              threads: int = 1) -> list[BenchRecord]:
    """Downsample the master to each size and solve with each method.

    Each (size, method) cell owns an RNG stream keyed by (seed, size,
    method), so cells are reproducible independently of execution order.
    Exceptions inside one cell become an Error record; the run continues.
    Gap columns compare against the Exact row of the same size when present.
    """
    from .milp import build_model, export_lp  # local import to avoid a cycle

    records: list[BenchRecord] = []
    for size in sizes:
        inst = downsample(master, size,
                          np.random.default_rng(np.random.SeedSequence(
                              entropy=[int(seed), int(size)])))
        inst = inst.with_budget(k)
        exact_value: float | None = None
        for method in methods:
            rng = _method_stream(seed, size, method)
            started = time.perf_counter()
            status, value = "Error", None
            params = _params(seed=seed)
            try:
                if method is Method.EXACT:
                    res = solve_exact(inst, time_limit)
                    status = res.status.value
                    value = res.allocation.total_cost if res.allocation else None
                    if res.status is SolveStatus.OPTIMAL:
                        exact_value = value
                elif method is Method.RESTRICTED_CBS:
                    cmap = sampling_points(inst, nbruns, k, rng, threads=threads)
                    res = solve_restricted(inst, cmap, time_limit)
                    status = res.status.value
                    value = res.allocation.total_cost if res.allocation else None
                    params = _params(nbruns=nbruns, seed=seed)
                elif method is Method.RESTRICTED_KCN:
                    cmap = kcn_candidates(inst, min(neighbors, inst.n))
                    res = solve_restricted(inst, cmap, time_limit)
                    status = res.status.value
                    value = res.allocation.total_cost if res.allocation else None
                    params = _params(neighbors=min(neighbors, inst.n), seed=seed)
                elif method is Method.LP_EXPORT_ONLY:
                    export_lp(build_model(inst), io.StringIO())
                    status = "Exported"
            except Exception as exc:  # record and continue per harness contract
                status, value = "Error", None
                params = params + (("error", type(exc).__name__),)
            elapsed = time.perf_counter() - started

            gap = None
            if value is not None and exact_value is not None and exact_value > 0:
                gap = 100.0 * (value - exact_value) / exact_value
            records.append(BenchRecord(
                n=inst.n, k=k, method=method, status=status, value=value,
                gap_percent=gap, time_s=elapsed if include_times else None,
                params=params + (("status", status),)))
    return records


def run_kcn_sweep(instance: Instance, k: int, neighbor_values: Sequence[int], *,
                  time_limit: float | None = None,
                  include_times: bool = False) -> list[BenchRecord]:
    """Solve the KCN-restricted problem for each neighbourhood size.

    Values are swept in ascending order and every row warm-starts from the
    previous feasible solution (feasible again because candidate sets only
    grow), which keeps reported objectives non-increasing even under a time
    limit.  The reference for gaps is the neighbors = n row when present,
    otherwise a plain exact solve.
    """
    inst = instance.with_budget(k)
    n = inst.n
    values = sorted(set(int(t) for t in neighbor_values))
    rows: list[tuple[int, str, float | None, float]] = []
    warm: tuple[int, ...] | None = None
    for t in values:
        started = time.perf_counter()
        cmap = kcn_candidates(inst, t)
        try:
            feas = check_feasible(n, k, cmap, time_limit=time_limit)
        except TimeoutError:
            # near-threshold feasibility can be undecidable in the row budget
            rows.append((t, "Undecided", None, time.perf_counter() - started))
            continue
        if not feas:
            rows.append((t, SolveStatus.INFEASIBLE.value, None,
                         time.perf_counter() - started))
            continue
        res = solve_restricted(inst, cmap, time_limit, warm_start=warm)
        value = res.allocation.total_cost if res.allocation else None
        if res.allocation is not None:
            warm = res.allocation.open
        rows.append((t, res.status.value, value, time.perf_counter() - started))

    reference = None
    if values and values[-1] == n and rows[-1][2] is not None:
        reference = rows[-1][2]
    else:
        ref_res = solve_exact(inst, time_limit)
        reference = ref_res.allocation.total_cost if ref_res.allocation else None

    records = []
    for t, status, value, elapsed in rows:
        gap = None
        if value is not None and reference:
            gap = 100.0 * (value - reference) / reference
        records.append(BenchRecord(
            n=n, k=k, method=Method.RESTRICTED_KCN, status=status, value=value,
            gap_percent=gap, time_s=elapsed if include_times else None,
            params=_params(neighbors=t, status=status)))
    return records


# ---------------------------------------------------------------------------
# Results CSV: header `n,k,method,value,gap_percent,time_s,params`.
# Values at 6 decimals, gaps at 3; empty cells for unavailable fields.
# ---------------------------------------------------------------------------

def write_bench_csv(records: Iterable[BenchRecord], sink: str | TextIO) -> None:
    if isinstance(sink, str):
        with open(sink, "w", newline="") as fh:
            write_bench_csv(records, fh)
        return
    sink.write("n,k,method,value,gap_percent,time_s,params\n")
    for r in records:
        value = f"{r.value:.6f}" if r.value is not None else ""
        gap = f"{r.gap_percent:.3f}" if r.gap_percent is not None else ""
        tsec = f"{r.time_s:.3f}" if r.time_s is not None else ""
        params = ";".join(f"{k}={v}" for k, v in r.params)
        sink.write(f"{r.n},{r.k},{r.method.value},{value},{gap},{tsec},{params}\n")


def bench_csv_text(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    write_bench_csv(records, buf)
    return buf.getvalue()
