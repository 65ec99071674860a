"""Problem data model and evaluation for dual-parented metro-node placement.

An instance is a set of exchange sites on an already-projected planar grid.
Every site is both a demand point and a candidate metro-node position.
Connecting site ``i`` to a node placed at site ``j`` costs

    routing_factor * dist(i, j) * alpha_i * load_i

where ``dist`` is the Euclidean distance in km and the routing factor
(default 1.6) converts straight-line distance into estimated fibre length
along roads.  An open node set is evaluated by parenting every site to its
two cheapest open nodes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

DEFAULT_ROUTING_FACTOR = 1.6

# Full n x n cost matrices are cached up to this many sites; above it the
# per-row accessors compute costs on the fly.
EAGER_MATRIX_LIMIT = 4096


class InfeasibleEvaluationError(ValueError):
    """Raised when an open set cannot dual-parent every site."""


class InstanceFormatError(ValueError):
    """Raised on malformed instance files; message carries the line number."""


@dataclass(frozen=True)
class ExchangeSite:
    """A weighted planar point: demand site and candidate node position."""

    id: int
    x: float
    y: float
    load: float
    alpha: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"site {self.id}: coordinates must be finite")
        if not self.load > 0:
            raise ValueError(f"site {self.id}: load must be positive")
        if not self.alpha > 0:
            raise ValueError(f"site {self.id}: alpha must be positive")


class Instance:
    """An immutable placement problem: sites, node budget k, routing factor.

    Site ids must be dense 0..n-1 and match their position in ``sites``.
    The derived coordinate/weight arrays and the cached cost matrix are
    read-only, so instances are safe to share across worker threads.
    """

    def __init__(self, sites: Iterable[ExchangeSite], k: int,
                 routing_factor: float = DEFAULT_ROUTING_FACTOR):
        sites = tuple(sites)
        if not sites:
            raise ValueError("an instance needs at least one site")
        if [s.id for s in sites] != list(range(len(sites))):
            raise ValueError("site ids must be dense 0..n-1, in order")
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
            raise ValueError("k must be an integer")
        if k < 1:
            raise ValueError("k must be positive")
        if k > len(sites):
            raise ValueError(f"k={k} exceeds the number of sites ({len(sites)})")
        if not routing_factor > 0:
            raise ValueError("routing_factor must be positive")

        self.sites = sites
        self.k = int(k)
        self.routing_factor = float(routing_factor)
        self.xy = np.array([(s.x, s.y) for s in sites], dtype=float)
        self.loads = np.array([s.load for s in sites], dtype=float)
        self.alphas = np.array([s.alpha for s in sites], dtype=float)
        self.weights = self.alphas * self.loads  # W_i = alpha_i * load_i
        for arr in (self.xy, self.loads, self.alphas, self.weights):
            arr.setflags(write=False)
        self._matrix: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.sites)

    def _check_id(self, i: int) -> int:
        i = int(i)
        if not 0 <= i < self.n:
            raise IndexError(f"site id {i} out of range 0..{self.n - 1}")
        return i

    def cost_row(self, i: int) -> np.ndarray:
        """Costs of connecting site i to a node at every site j."""
        i = self._check_id(i)
        if self._matrix is not None:
            return self._matrix[i]
        d = np.hypot(self.xy[:, 0] - self.xy[i, 0], self.xy[:, 1] - self.xy[i, 1])
        return self.routing_factor * self.weights[i] * d

    def cost_matrix(self) -> np.ndarray:
        """Dense c[i, j]; cached for n <= EAGER_MATRIX_LIMIT, else recomputed."""
        if self._matrix is not None:
            return self._matrix
        dx = self.xy[:, 0][:, None] - self.xy[:, 0][None, :]
        dy = self.xy[:, 1][:, None] - self.xy[:, 1][None, :]
        c = self.routing_factor * np.hypot(dx, dy) * self.weights[:, None]
        c.setflags(write=False)
        if self.n <= EAGER_MATRIX_LIMIT:
            self._matrix = c
        return c

    def rescaled(self, factor: float) -> "Instance":
        """Copy with all coordinates multiplied by ``factor`` (> 0)."""
        sites = [ExchangeSite(s.id, s.x * factor, s.y * factor, s.load, s.alpha)
                 for s in self.sites]
        return Instance(sites, self.k, self.routing_factor)

    def with_budget(self, k: int) -> "Instance":
        return Instance(self.sites, k, self.routing_factor)

    def __repr__(self):
        return f"Instance(n={self.n}, k={self.k}, routing_factor={self.routing_factor})"


@dataclass(frozen=True)
class Allocation:
    """An open node set plus each site's primary/secondary parent.

    ``primary[i]`` is site i's cheapest open node and ``secondary[i]`` the
    second cheapest (cost ties broken by the lower site id); ``total_cost``
    sums both connections over all sites.
    """

    open: tuple[int, ...]
    primary: tuple[int, ...]
    secondary: tuple[int, ...]
    total_cost: float


def cost(instance: Instance, i: int, j: int) -> float:
    """Fibre cost of connecting site i to a metro node at site j."""
    i = instance._check_id(i)
    j = instance._check_id(j)
    d = math.hypot(instance.xy[i, 0] - instance.xy[j, 0],
                   instance.xy[i, 1] - instance.xy[j, 1])
    return instance.routing_factor * d * instance.alphas[i] * instance.loads[i]


def evaluate(instance: Instance, open_ids: Iterable[int]) -> Allocation:
    """Parent every site to its two cheapest nodes of ``open_ids``.

    Raises InfeasibleEvaluationError when fewer than two distinct nodes are
    given (dual parenting needs two distinct parents).  The open set is
    normally of size k, but larger sets are evaluated the same way.
    """
    open_sorted = sorted({instance._check_id(j) for j in open_ids})
    if len(open_sorted) < 2:
        raise InfeasibleEvaluationError(
            f"need at least two distinct open nodes, got {len(open_sorted)}")
    cols = np.array(open_sorted, dtype=int)
    d = np.hypot(instance.xy[:, 0][:, None] - instance.xy[cols, 0][None, :],
                 instance.xy[:, 1][:, None] - instance.xy[cols, 1][None, :])
    sub = instance.routing_factor * d * instance.weights[:, None]
    rows = np.arange(instance.n)
    # argmin returns the first minimum; columns are in ascending id order,
    # which implements the lowest-id tie-break for both parents.
    p = sub.argmin(axis=1)
    v1 = sub[rows, p]
    sub2 = sub.copy()
    sub2[rows, p] = np.inf
    s = sub2.argmin(axis=1)
    v2 = sub2[rows, s]
    total = float((v1 + v2).sum())
    return Allocation(open=tuple(open_sorted),
                      primary=tuple(int(cols[i]) for i in p),
                      secondary=tuple(int(cols[i]) for i in s),
                      total_cost=total)


# ---------------------------------------------------------------------------
# Instance CSV format: header `id,x,y,load,alpha`, one site per line; the
# alpha column is optional and defaults to 1.0.  k and routing_factor are
# not part of the file; they come from CLI flags or a sidecar JSON.
# ---------------------------------------------------------------------------

_REQUIRED_COLUMNS = ("id", "x", "y", "load")


def read_sites_csv(source: str | TextIO) -> list[ExchangeSite]:
    """Parse a sites CSV; errors carry the 1-based line number."""
    if isinstance(source, str):
        with open(source, "r", newline="") as fh:
            return read_sites_csv(fh)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise InstanceFormatError("line 1: empty file, expected header id,x,y,load[,alpha]")
    header = [h.strip() for h in header]
    for col in _REQUIRED_COLUMNS:
        if col not in header:
            raise InstanceFormatError(f"line 1: missing required column {col!r}")
    idx = {name: header.index(name) for name in header}
    has_alpha = "alpha" in idx

    rows = []
    for ln, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            sid = int(row[idx["id"]])
            x = float(row[idx["x"]])
            y = float(row[idx["y"]])
            load = float(row[idx["load"]])
            alpha = 1.0
            if has_alpha and row[idx["alpha"]].strip() != "":
                alpha = float(row[idx["alpha"]])
        except (ValueError, IndexError) as exc:
            raise InstanceFormatError(f"line {ln}: {exc}") from None
        try:
            rows.append((sid, ExchangeSite(sid, x, y, load, alpha)))
        except ValueError as exc:
            raise InstanceFormatError(f"line {ln}: {exc}") from None

    rows.sort(key=lambda pair: pair[0])
    sites = [site for _, site in rows]
    if [s.id for s in sites] != list(range(len(sites))):
        raise InstanceFormatError("site ids must be unique and contiguous 0..n-1")
    return sites


def write_sites_csv(sites: Sequence[ExchangeSite], sink: str | TextIO) -> None:
    """Write sites in the documented CSV format (always with alpha)."""
    if isinstance(sink, str):
        with open(sink, "w", newline="") as fh:
            write_sites_csv(sites, fh)
        return
    sink.write("id,x,y,load,alpha\n")
    for s in sites:
        sink.write(f"{s.id},{s.x!r},{s.y!r},{s.load!r},{s.alpha!r}\n")


def sites_csv_bytes(sites: Sequence[ExchangeSite]) -> bytes:
    buf = io.StringIO()
    write_sites_csv(sites, buf)
    return buf.getvalue().encode()
