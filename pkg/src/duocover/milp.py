"""Binary programming model of the placement problem and LP-format export.

Variables: x_{i}_{j} = 1 when site i connects to a node at j, y_{j} = 1
when a node is opened at j.  Constraints: every site picks exactly two
parents, exactly k nodes open, and linking rows tie x to y.  Strong linking
writes one row y_j >= x_ij per pair; weak linking aggregates per column as
n * y_j >= sum_i x_ij.  Both have the same integer optimum; they differ
only in LP relaxation strength.

At a minimisation optimum the two chosen parents are necessarily the two
cheapest open nodes, so the model optimum equals the placement optimum; a
feasible but suboptimal MIP solution need not be a valid allocation.

The text export follows the common LP file conventions (Minimize /
Subject To / Binary / End) with coefficients at 12 significant digits, and
`parse_lp` reads such files back for round-trip checks and external-solver
workflows.
"""

from __future__ import annotations

import enum
import io
import itertools
import re
from dataclasses import dataclass
from typing import Iterable, TextIO

from .clustering import CandidateMap
from .core import Allocation, Instance

_NUM_FMT = "{:.12g}"
_MAX_LINE = 240  # wrap long expressions well under classic LP line limits


class Linking(enum.Enum):
    STRONG = "strong"
    WEAK = "weak"


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[tuple[float, str], ...]  # ordered (coefficient, variable)
    sense: str                            # "=", ">=" or "<="
    rhs: float


@dataclass(frozen=True)
class MilpModel:
    n: int
    k: int
    linking: Linking
    variables: tuple[str, ...]            # x vars row-major, then y vars
    objective: tuple[tuple[float, str], ...]
    rows: tuple[Row, ...]

    @property
    def x_variables(self) -> list[str]:
        return [v for v in self.variables if v.startswith("x_")]

    @property
    def y_variables(self) -> list[str]:
        return [v for v in self.variables if v.startswith("y_")]

    def objective_coefficient(self, var: str) -> float:
        for coef, name in self.objective:
            if name == var:
                return coef
        return 0.0


def _xname(i: int, j: int) -> str:
    return f"x_{i}_{j}"


def _yname(j: int) -> str:
    return f"y_{j}"


def build_model(instance: Instance, candidates: CandidateMap | None = None,
                linking: Linking = Linking.STRONG) -> MilpModel:
    """Assemble the model, restricted to ``candidates`` when given.

    x variables exist only for allowed (site, position) pairs; y variables
    exist for every position.  Row counts: n assignment rows, one strong
    row per x variable or n weak rows, and one cardinality row.
    """
    n, k = instance.n, instance.k
    if candidates is not None:
        candidates.validate_ids(n)
        allowed = [sorted(candidates.pos[i]) for i in range(n)]
    else:
        allowed = [list(range(n)) for _ in range(n)]
    c = instance.cost_matrix()

    variables: list[str] = []
    objective: list[tuple[float, str]] = []
    for i in range(n):
        for j in allowed[i]:
            variables.append(_xname(i, j))
            objective.append((float(c[i, j]), _xname(i, j)))
    variables.extend(_yname(j) for j in range(n))

    rows: list[Row] = []
    for i in range(n):
        rows.append(Row(name=f"assign_{i}",
                        terms=tuple((1.0, _xname(i, j)) for j in allowed[i]),
                        sense="=", rhs=2.0))
    if linking is Linking.STRONG:
        for i in range(n):
            for j in allowed[i]:
                rows.append(Row(name=f"link_{i}_{j}",
                                terms=((1.0, _yname(j)), (-1.0, _xname(i, j))),
                                sense=">=", rhs=0.0))
    else:
        # The weak coefficient is the full site count n even when candidate
        # restriction shrinks the column; one row per position regardless.
        column_users = [[] for _ in range(n)]
        for i in range(n):
            for j in allowed[i]:
                column_users[j].append(i)
        for j in range(n):
            terms = [(float(n), _yname(j))]
            terms.extend((-1.0, _xname(i, j)) for i in column_users[j])
            rows.append(Row(name=f"wlink_{j}", terms=tuple(terms),
                            sense=">=", rhs=0.0))
    rows.append(Row(name="card",
                    terms=tuple((1.0, _yname(j)) for j in range(n)),
                    sense="=", rhs=float(k)))

    return MilpModel(n=n, k=k, linking=linking, variables=tuple(variables),
                     objective=tuple(objective), rows=tuple(rows))


# ---------------------------------------------------------------------------
# LP text writer.
# ---------------------------------------------------------------------------

def _term_text(coef: float, name: str, first: bool) -> str:
    mag = abs(coef)
    body = name if mag == 1.0 else f"{_NUM_FMT.format(mag)} {name}"
    if first:
        return body if coef >= 0 else f"- {body}"
    return f"+ {body}" if coef >= 0 else f"- {body}"


def _write_expr(out: list[str], label: str, terms, tail: str) -> None:
    line = f" {label}:"
    first = True
    for coef, name in terms:
        piece = _term_text(coef, name, first)
        first = False
        if len(line) + len(piece) + 1 > _MAX_LINE:
            out.append(line)
            line = "   " + piece
        else:
            line += " " + piece
    if tail:
        line += " " + tail
    out.append(line)


def export_lp(model: MilpModel, sink: str | TextIO) -> None:
    """Write the model as LP-format text with stable names and ordering."""
    if isinstance(sink, str):
        with open(sink, "w", newline="") as fh:
            export_lp(model, fh)
        return
    out: list[str] = ["Minimize"]
    _write_expr(out, "obj", model.objective, "")
    out.append("Subject To")
    for row in model.rows:
        tail = f"{row.sense} {_NUM_FMT.format(row.rhs)}"
        _write_expr(out, row.name, row.terms, tail)
    out.append("Binary")
    out.extend(f" {v}" for v in model.variables)
    out.append("End")
    sink.write("\n".join(out) + "\n")


def export_lp_text(model: MilpModel) -> str:
    buf = io.StringIO()
    export_lp(model, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# LP text parser (independent reader used for round-trip verification and
# for loading models produced by other tools with the same conventions).
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""(?P<name>[A-Za-z_][A-Za-z0-9_.]*)
      | (?P<num>[0-9]+(?:\.[0-9]*)?(?:[eE][+-]?[0-9]+)?|\.[0-9]+(?:[eE][+-]?[0-9]+)?)
      | (?P<sense>>=|<=|=)
      | (?P<colon>:)
      | (?P<sign>[+-])
    """, re.VERBOSE)

_SECTION_HEADERS = {
    "minimize": "objective", "min": "objective",
    "subject": "rows", "st": "rows", "s.t.": "rows",
    "binary": "binary", "binaries": "binary", "bin": "binary",
    "end": "end",
}


def _tokenize(text: str):
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup
        yield kind, match.group()


def parse_lp(source: str | TextIO) -> MilpModel:
    """Parse LP text written by :func:`export_lp` back into a model.

    Accepts the Minimize / Subject To / Binary / End sections with the
    x_{i}_{j} / y_{j} naming scheme; raises ValueError on anything else.
    """
    if hasattr(source, "read"):
        text = source.read()
    elif "\n" in source:
        text = source
    else:
        with open(source, "r") as fh:
            text = fh.read()

    lines = [ln for ln in text.splitlines() if not ln.lstrip().startswith("\\")]
    section = None
    sections: dict[str, list[str]] = {"objective": [], "rows": [], "binary": []}
    for ln in lines:
        stripped = ln.strip()
        if not stripped:
            continue
        head = stripped.split()[0].lower().rstrip(":")
        if head in _SECTION_HEADERS:
            section = _SECTION_HEADERS[head]
            if section == "end":
                break
            continue
        if section is None:
            raise ValueError(f"unexpected text before any section: {stripped!r}")
        sections[section].append(stripped)

    def parse_expr(tokens):
        """Consume sign/number/name triples until a sense token or the end."""
        terms = []
        sign = 1.0
        coef = None
        idx = 0
        while idx < len(tokens):
            kind, tok = tokens[idx]
            if kind == "sense":
                break
            if kind == "sign":
                sign = -1.0 if tok == "-" else 1.0
            elif kind == "num":
                coef = float(tok)
            elif kind == "name":
                terms.append((sign * (1.0 if coef is None else coef), tok))
                sign, coef = 1.0, None
            else:
                raise ValueError(f"unexpected token {tok!r} in expression")
            idx += 1
        return terms, idx

    obj_tokens = list(_tokenize(" ".join(sections["objective"])))
    if obj_tokens and obj_tokens[0][0] == "name" and obj_tokens[1:2] and obj_tokens[1][0] == "colon":
        obj_tokens = obj_tokens[2:]
    objective, used = parse_expr(obj_tokens)
    if used != len(obj_tokens):
        raise ValueError("trailing tokens after the objective expression")

    row_tokens = list(_tokenize(" ".join(sections["rows"])))
    rows: list[Row] = []
    pos = 0
    while pos < len(row_tokens):
        kind, tok = row_tokens[pos]
        if kind != "name" or pos + 1 >= len(row_tokens) or row_tokens[pos + 1][0] != "colon":
            raise ValueError(f"expected 'rowname:' at constraint start, got {tok!r}")
        name = tok
        pos += 2
        terms, used = parse_expr(row_tokens[pos:])
        pos += used
        if pos >= len(row_tokens) or row_tokens[pos][0] != "sense":
            raise ValueError(f"constraint {name!r} has no sense token")
        sense = row_tokens[pos][1]
        pos += 1
        sign = 1.0
        if pos < len(row_tokens) and row_tokens[pos][0] == "sign":
            sign = -1.0 if row_tokens[pos][1] == "-" else 1.0
            pos += 1
        if pos >= len(row_tokens) or row_tokens[pos][0] != "num":
            raise ValueError(f"constraint {name!r} has no right-hand side")
        rhs = sign * float(row_tokens[pos][1])
        pos += 1
        rows.append(Row(name=name, terms=tuple(terms), sense=sense, rhs=rhs))

    variables = tuple(tok for kind, tok in _tokenize(" ".join(sections["binary"]))
                      if kind == "name")
    if not variables:
        raise ValueError("no Binary section variables found")

    assign_rows = [r for r in rows if r.name.startswith("assign_")]
    card_rows = [r for r in rows if r.name == "card"]
    if len(card_rows) != 1:
        raise ValueError("expected exactly one cardinality row named 'card'")
    linking = Linking.WEAK if any(r.name.startswith("wlink_") for r in rows) else Linking.STRONG
    return MilpModel(n=len(assign_rows), k=int(round(card_rows[0].rhs)),
                     linking=linking, variables=variables,
                     objective=tuple(objective), rows=tuple(rows))


# ---------------------------------------------------------------------------
# Solution import: `variable value` per line from an external solver.
# ---------------------------------------------------------------------------

def read_solution(source: str | TextIO) -> dict[str, float]:
    if isinstance(source, str) and "\n" not in source:
        with open(source, "r") as fh:
            return read_solution(fh)
    text = source if isinstance(source, str) else source.read()
    values: dict[str, float] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("\\"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {ln}: expected 'variable value'")
        try:
            values[parts[0]] = float(parts[1])
        except ValueError:
            raise ValueError(f"line {ln}: bad value {parts[1]!r}") from None
    return values


_XVAR_RE = re.compile(r"^x_(\d+)_(\d+)$")
_YVAR_RE = re.compile(r"^y_(\d+)$")


def allocation_from_solution(instance: Instance,
                             values: dict[str, float]) -> Allocation:
    """Map a binary model solution back to an allocation.

    Expects exactly two set x variables per site, each pointing at an open
    position.  The cheaper of the two becomes the primary parent (cost ties
    break to the lower id); the total is recomputed from instance costs.
    """
    n = instance.n
    open_set = sorted(int(_YVAR_RE.match(name).group(1))
                      for name, val in values.items()
                      if _YVAR_RE.match(name) and val > 0.5)
    chosen: list[list[int]] = [[] for _ in range(n)]
    for name, val in values.items():
        m = _XVAR_RE.match(name)
        if m and val > 0.5:
            i, j = int(m.group(1)), int(m.group(2))
            if not 0 <= i < n or not 0 <= j < n:
                raise ValueError(f"variable {name} is out of range for n={n}")
            chosen[i].append(j)
    primary, secondary = [], []
    total = 0.0
    c = instance.cost_matrix()
    open_lookup = set(open_set)
    for i in range(n):
        if len(chosen[i]) != 2:
            raise ValueError(f"site {i} has {len(chosen[i])} parents set, expected 2")
        a, b = sorted(chosen[i])
        if a not in open_lookup or b not in open_lookup:
            raise ValueError(f"site {i} is parented by a closed position")
        if (c[i, b], b) < (c[i, a], a):
            a, b = b, a
        primary.append(a)
        secondary.append(b)
        total += float(c[i, a] + c[i, b])
    return Allocation(open=tuple(open_set), primary=tuple(primary),
                      secondary=tuple(secondary), total_cost=total)


# ---------------------------------------------------------------------------
# Brute-force optimisation of a parsed model (over y, with x implied).
# Used to verify that exported text preserves the optimisation problem.
# ---------------------------------------------------------------------------

def brute_force_model(model: MilpModel) -> tuple[float, tuple[int, ...] | None]:
    """Enumerate all k-subsets of open positions on the parsed structure.

    With integer y the strong and weak linkings both force x to live on
    open columns, so for each open set every site takes its two cheapest
    allowed columns by objective coefficient.  Returns (value, open set);
    (inf, None) when no subset is feasible.
    """
    coef = {name: c for c, name in model.objective}
    site_cols: dict[int, list[tuple[float, int]]] = {}
    for name in model.x_variables:
        m = _XVAR_RE.match(name)
        i, j = int(m.group(1)), int(m.group(2))
        site_cols.setdefault(i, []).append((coef.get(name, 0.0), j))
    positions = sorted(int(_YVAR_RE.match(v).group(1)) for v in model.y_variables)

    best_val, best_set = float("inf"), None
    for combo in itertools.combinations(positions, model.k):
        open_set = set(combo)
        total = 0.0
        feasible = True
        for i in range(model.n):
            avail = sorted((cst, j) for cst, j in site_cols.get(i, []) if j in open_set)
            if len(avail) < 2:
                feasible = False
                break
            total += avail[0][0] + avail[1][0]
        if feasible and total < best_val:
            best_val, best_set = total, combo
    return best_val, best_set
