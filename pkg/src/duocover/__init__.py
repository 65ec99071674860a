"""duocover: dual-parented metro-node placement toolkit.

Pick k metro-node positions among exchange sites so that every site can
connect to its two cheapest open nodes at minimum total fibre cost.  Ships
an exact branch-and-bound solver, an LP-format model exporter, candidate
sampling heuristics (cluster-based sampling and k-cheapest neighbours),
reduction-based test oracles, and a benchmark harness.
"""

from .clustering import (CandidateMap, CandidateSource, ClusterState,
                         cluster_medoids, compute_overlapping_clusters,
                         kcn_candidates, read_candidates_csv, sampling_points,
                         write_candidates_csv)
from .core import (DEFAULT_ROUTING_FACTOR, Allocation, ExchangeSite, Instance,
                   InfeasibleEvaluationError, InstanceFormatError, cost,
                   evaluate, read_sites_csv, write_sites_csv)
from .milp import (Linking, MilpModel, allocation_from_solution, brute_force_model,
                   build_model, export_lp, export_lp_text, parse_lp, read_solution)
from .pipeline import (BenchRecord, Method, SpatialProfile, downsample,
                       generate_master, run_kcn_sweep, run_table, write_bench_csv)
from .reductions import (DcpInstance, HittingSetInstance, ScpInstance,
                         beta_below_costs, hitting_set_to_scp, scp_to_dcp,
                         solve_dcp_enumeration, solve_hitting_set, solve_scp)
from .solver import (FeasibilityResult, SolveResult, SolveStatus, check_feasible,
                     solve_by_enumeration, solve_exact, solve_matrix,
                     solve_restricted, two_cheapest_lower_bound)

__version__ = "0.1.0"
