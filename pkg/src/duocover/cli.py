"""Command-line entry point.

Subcommands: ``gen`` (synthetic master instance), ``downsample``, ``sample``
(candidate maps via CBS or KCN), ``solve`` (exact or candidate-restricted),
``export-lp``, and ``bench`` (gap tables or the KCN sweep).

Exit codes: 0 success, 2 infeasible, 1 any error (including usage errors).
Instance-level parameters resolve as flags > sidecar JSON > defaults, where
the sidecar of ``sites.csv`` is ``sites.json`` holding ``{"k": ...,
"routing_factor": ...}``.  The default seed is fixed for reproducibility
and can be overridden by the DUOCOVER_SEED environment variable or --seed.
Outputs contain no wall-clock fields unless --times wall is given, so a
repeated invocation with the same inputs writes identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import clustering, core, milp, pipeline, solver

DEFAULT_SEED = 1729

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="duocover",
                     description="Dual-parented metro-node placement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, needs_seed=True):
        if needs_seed:
            p.add_argument("--seed", type=int, default=None,
                           help=f"RNG seed (default {DEFAULT_SEED}, "
                                "env DUOCOVER_SEED overrides the default)")

    p = sub.add_parser("gen", help="generate a synthetic master instance CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--profile", choices=[x.value for x in pipeline.SpatialProfile],
                   default=pipeline.SpatialProfile.CLUSTERED_TOWNS.value)
    p.add_argument("--output", required=True)
    add_common(p)

    p = sub.add_parser("downsample", help="k-means downsample an instance CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--routing-factor", type=float, default=None)
    p.add_argument("--output", required=True)
    add_common(p)

    p = sub.add_parser("sample", help="write a candidate map CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=["cbs", "kcn"], required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--routing-factor", type=float, default=None)
    p.add_argument("--nbruns", type=int, default=30)
    p.add_argument("--neighbors", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--output", required=True)
    add_common(p)

    p = sub.add_parser("solve", help="solve exactly, optionally restricted")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--routing-factor", type=float, default=None)
    p.add_argument("--candidates", default=None,
                   help="candidate map CSV restricting each site's parents")
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--times", choices=["none", "wall"], default="none",
                   help="include wall-clock time in the output (breaks "
                        "byte-reproducibility)")
    p.add_argument("--output", default=None, help="JSON path (default stdout)")
    add_common(p)

    p = sub.add_parser("export-lp", help="write the model in LP text format")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--routing-factor", type=float, default=None)
    p.add_argument("--candidates", default=None)
    p.add_argument("--linking", choices=[x.value for x in milp.Linking],
                   default=milp.Linking.STRONG.value)
    p.add_argument("--output", required=True)
    add_common(p, needs_seed=False)

    p = sub.add_parser("bench", help="gap/time tables or the KCN sweep")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--routing-factor", type=float, default=None)
    p.add_argument("--mode", choices=["table", "sweep"], default="table")
    p.add_argument("--sizes", default="30,40,50",
                   help="comma-separated downsample sizes (table mode)")
    p.add_argument("--methods", default="exact,cbs,kcn",
                   help="comma-separated subset of: exact,cbs,kcn,lp")
    p.add_argument("--neighbors-list", default="2,4,8,16,32",
                   help="comma-separated neighbourhood sizes (sweep mode)")
    p.add_argument("--nbruns", type=int, default=30)
    p.add_argument("--neighbors", type=int, default=10)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--times", choices=["none", "wall"], default="none")
    p.add_argument("--output", required=True)
    add_common(p)

    return parser


_METHOD_ALIASES = {
    "exact": pipeline.Method.EXACT,
    "cbs": pipeline.Method.RESTRICTED_CBS,
    "kcn": pipeline.Method.RESTRICTED_KCN,
    "lp": pipeline.Method.LP_EXPORT_ONLY,
}


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("DUOCOVER_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _UsageError(f"DUOCOVER_SEED must be an integer, got {env!r}")
    return DEFAULT_SEED


def _sidecar_params(input_path: str) -> dict:
    sidecar = Path(input_path).with_suffix(".json")
    if not sidecar.exists():
        return {}
    with open(sidecar) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{sidecar}: sidecar must be a JSON object")
    return data


def _load_instance(args) -> core.Instance:
    sites = core.read_sites_csv(args.input)
    sidecar = _sidecar_params(args.input)
    k = args.k if args.k is not None else sidecar.get("k")
    if k is None:
        raise _UsageError("k is required: pass --k or provide a sidecar JSON")
    rf = (args.routing_factor if args.routing_factor is not None
          else sidecar.get("routing_factor", core.DEFAULT_ROUTING_FACTOR))
    return core.Instance(sites, k=int(k), routing_factor=float(rf))


def _load_candidates(path: str | None, n: int) -> clustering.CandidateMap | None:
    if path is None:
        return None
    return clustering.read_candidates_csv(path, n)


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _cmd_gen(args) -> int:
    rng = np.random.default_rng(_resolve_seed(args))
    inst = pipeline.generate_master(args.n, pipeline.SpatialProfile(args.profile), rng)
    core.write_sites_csv(inst.sites, args.output)
    return EXIT_OK


def _cmd_downsample(args) -> int:
    inst = _load_instance(args)
    rng = np.random.default_rng(_resolve_seed(args))
    out = pipeline.downsample(inst, args.m, rng)
    core.write_sites_csv(out.sites, args.output)
    return EXIT_OK


def _cmd_sample(args) -> int:
    inst = _load_instance(args)
    if args.method == "cbs":
        rng = np.random.default_rng(_resolve_seed(args))
        cmap = clustering.sampling_points(inst, args.nbruns, inst.k, rng,
                                          threads=args.threads)
    else:
        cmap = clustering.kcn_candidates(inst, args.neighbors)
    clustering.write_candidates_csv(cmap, args.output)
    return EXIT_OK


def _cmd_solve(args) -> int:
    inst = _load_instance(args)
    cmap = _load_candidates(args.candidates, inst.n)
    if cmap is None:
        result = solver.solve_exact(inst, args.time_limit)
    else:
        result = solver.solve_restricted(inst, cmap, args.time_limit)
    _write_text(args.output, result.to_json(include_timings=args.times == "wall"))
    return EXIT_INFEASIBLE if result.status is solver.SolveStatus.INFEASIBLE else EXIT_OK


def _cmd_export_lp(args) -> int:
    inst = _load_instance(args)
    cmap = _load_candidates(args.candidates, inst.n)
    model = milp.build_model(inst, cmap, milp.Linking(args.linking))
    milp.export_lp(model, args.output)
    return EXIT_OK


def _cmd_bench(args) -> int:
    inst = _load_instance(args)
    include_times = args.times == "wall"
    if args.mode == "table":
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
        try:
            methods = [_METHOD_ALIASES[name.strip().lower()]
                       for name in args.methods.split(",") if name.strip()]
        except KeyError as exc:
            raise _UsageError(f"unknown method {exc.args[0]!r}") from None
        records = pipeline.run_table(
            inst, sizes, inst.k, methods, seed=_resolve_seed(args),
            nbruns=args.nbruns, neighbors=args.neighbors,
            time_limit=args.time_limit, include_times=include_times,
            threads=args.threads)
    else:
        values = [int(s) for s in args.neighbors_list.split(",") if s.strip()]
        records = pipeline.run_kcn_sweep(inst, inst.k, values,
                                         time_limit=args.time_limit,
                                         include_times=include_times)
    pipeline.write_bench_csv(records, args.output)
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "downsample": _cmd_downsample,
    "sample": _cmd_sample,
    "solve": _cmd_solve,
    "export-lp": _cmd_export_lp,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, IndexError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
