import itertools
import json
import math

import numpy as np
import pytest

from duocover.clustering import CandidateMap, CandidateSource, kcn_candidates, sampling_points
from duocover.core import ExchangeSite, Instance, evaluate
from duocover.pipeline import SpatialProfile, generate_master
from duocover.solver import (SolveResult, SolveStatus, check_feasible,
                             lagrangian_ascent, lagrangian_node_bound,
                             solve_by_enumeration, solve_exact, solve_matrix,
                             solve_restricted, two_cheapest_lower_bound)


def make_instance(coords, k=2, loads=None, alphas=None, routing_factor=1.0):
    n = len(coords)
    loads = loads or [1.0] * n
    alphas = alphas or [1.0] * n
    sites = [ExchangeSite(i, float(x), float(y), loads[i], alphas[i])
             for i, (x, y) in enumerate(coords)]
    return Instance(sites, k=k, routing_factor=routing_factor)


def brute_force_value(c, k, forbidden_cols=()):
    """Plain-python exhaustive optimum, independent of the solver module."""
    n, m = c.shape
    best = math.inf
    best_set = None
    for combo in itertools.combinations(
            [j for j in range(m) if j not in forbidden_cols], k):
        total = 0.0
        ok = True
        for i in range(n):
            pair = sorted(c[i, j] for j in combo)[:2]
            if not all(math.isfinite(v) for v in pair):
                ok = False
                break
            total += pair[0] + pair[1]
        if ok and total < best:
            best, best_set = total, combo
    return best, best_set


class TestSolveExact:
    def test_collinear_four_sites(self):
        inst = make_instance([(0, 0), (1, 0), (2, 0), (3, 0)], k=2)
        res = solve_exact(inst)
        assert res.status is SolveStatus.OPTIMAL
        assert res.allocation.total_cost == pytest.approx(8.0, rel=1e-12)
        assert res.allocation.open == (1, 2)
        assert res.bound == pytest.approx(res.allocation.total_cost, rel=1e-9)

    def test_k_equals_n_opens_everything(self):
        rng = np.random.default_rng(5)
        coords = rng.uniform(0, 10, size=(6, 2)).tolist()
        inst = make_instance(coords, k=6)
        res = solve_exact(inst)
        assert res.allocation.open == tuple(range(6))
        c = inst.cost_matrix()
        expected = sum(sorted(c[i, j] for j in range(6) if j != i)[0] for i in range(6))
        assert res.allocation.total_cost == pytest.approx(expected, rel=1e-9)

    def test_matches_enumeration_on_random_instances(self):
        rng = np.random.default_rng(17)
        for trial in range(25):
            n = int(rng.integers(6, 14))
            k = int(rng.integers(2, min(5, n) + 1))
            profile = SpatialProfile.UNIFORM if trial % 2 else SpatialProfile.CLUSTERED_TOWNS
            inst = generate_master(n, profile, np.random.default_rng(300 + trial), k=k)
            res = solve_exact(inst)
            val, _ = solve_by_enumeration(inst.cost_matrix(), k)
            assert res.status is SolveStatus.OPTIMAL
            assert res.allocation.total_cost == pytest.approx(val, rel=1e-9)

    def test_k_below_two_is_infeasible(self):
        inst = make_instance([(0, 0), (1, 0)], k=1)
        res = solve_exact(inst)
        assert res.status is SolveStatus.INFEASIBLE
        assert res.allocation is None

    def test_allocation_consistent_with_evaluate(self):
        inst = generate_master(15, SpatialProfile.UNIFORM, np.random.default_rng(2), k=4)
        res = solve_exact(inst)
        again = evaluate(inst, res.allocation.open)
        assert again.total_cost == pytest.approx(res.allocation.total_cost, rel=1e-12)
        assert again.primary == res.allocation.primary

    def test_deterministic_repeat(self):
        inst = generate_master(30, SpatialProfile.CLUSTERED_TOWNS,
                               np.random.default_rng(8), k=5)
        a = solve_exact(inst)
        b = solve_exact(inst)
        assert a.allocation.total_cost == b.allocation.total_cost
        assert a.allocation.open == b.allocation.open
        assert a.nodes_explored == b.nodes_explored

    def test_time_limit_returns_incumbent(self):
        inst = generate_master(60, SpatialProfile.CLUSTERED_TOWNS,
                               np.random.default_rng(12), k=6)
        res = solve_exact(inst, time_limit=0.0)
        assert res.status is SolveStatus.TIMED_OUT
        assert res.allocation is not None          # warm start incumbent
        assert res.bound <= res.allocation.total_cost + 1e-9

    def test_budget_monotonicity(self):
        inst = generate_master(14, SpatialProfile.UNIFORM, np.random.default_rng(23), k=2)
        values = []
        for k in range(2, 7):
            res = solve_exact(inst.with_budget(k))
            values.append(res.allocation.total_cost)
        assert all(a >= b - 1e-9 for a, b in zip(values, values[1:]))


class TestEnumerationOracle:
    def test_returns_lexicographically_smallest_optimum(self):
        # two optimal subsets exist by symmetry; lex order must win
        c = np.array([[0.0, 1.0, 1.0],
                      [0.0, 1.0, 1.0]])
        val, combo = solve_by_enumeration(c, 2)
        assert val == pytest.approx(2.0)
        assert combo == (0, 1)

    def test_against_plain_python(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            c = rng.uniform(0, 9, size=(5, 6))
            val, combo = solve_by_enumeration(c, 3)
            ref_val, ref_set = brute_force_value(c, 3)
            assert val == pytest.approx(ref_val, rel=1e-12)
            assert combo == ref_set

    def test_infeasible_matrix(self):
        c = np.full((2, 3), np.inf)
        val, combo = solve_by_enumeration(c, 2)
        assert val == math.inf and combo is None


class TestBounds:
    def test_two_cheapest_bound_sound_under_exclusions(self):
        rng = np.random.default_rng(9)
        for trial in range(20):
            n, m, k = 6, 8, 3
            c = rng.uniform(0, 50, size=(n, m))
            excluded = set(rng.choice(m, size=int(rng.integers(0, 4)),
                                      replace=False).tolist())
            bound = two_cheapest_lower_bound(c, excluded)
            true_best, _ = brute_force_value(c, k, forbidden_cols=excluded)
            assert bound <= true_best + 1e-9

    def test_two_cheapest_bound_exact_at_full_exclusion(self):
        rng = np.random.default_rng(10)
        c = rng.uniform(0, 5, size=(4, 6))
        keep = [1, 3, 5]
        bound = two_cheapest_lower_bound(c, excluded=[0, 2, 4])
        value = sum(sorted(c[i, j] for j in keep)[:2][0]
                    + sorted(c[i, j] for j in keep)[:2][1] for i in range(4))
        assert bound == pytest.approx(value, rel=1e-12)

    def test_lagrangian_bound_sound(self):
        rng = np.random.default_rng(13)
        for trial in range(15):
            n, m, k = 5, 7, 3
            c = rng.uniform(0, 40, size=(n, m))
            opt, _ = brute_force_value(c, k)
            lam, rho, root = lagrangian_ascent(c, k, opt)
            assert root <= opt + 1e-6 * max(1.0, abs(opt))
            # node variants with forced columns stay sound
            inc = {0}
            exc = {1}
            node = lagrangian_node_bound(rho, float(2 * lam.sum()), k, inc, exc)
            best_inc = math.inf
            for combo in itertools.combinations([j for j in range(m) if j != 1], k):
                if 0 not in combo:
                    continue
                total = sum(sorted(c[i, j] for j in combo)[:2][0]
                            + sorted(c[i, j] for j in combo)[:2][1]
                            for i in range(n))
                best_inc = min(best_inc, total)
            assert node <= best_inc + 1e-6 * max(1.0, abs(best_inc))


class TestCheckFeasible:
    def full_map(self, n):
        return CandidateMap.full(n)

    def test_shared_pair_feasible(self):
        pos = tuple(frozenset({0, 1}) | frozenset({i}) for i in range(5))
        cmap = CandidateMap(pos=pos, source=CandidateSource.CBS)
        res = check_feasible(5, 2, cmap)
        assert res.feasible
        assert set(res.witness) >= set()
        assert len(res.witness) == 2
        assert all(len(set(res.witness) & pos[i]) >= 2 for i in range(5))

    def test_singleton_candidate_infeasible_with_certificate(self):
        pos = (frozenset({0}), frozenset({0, 1}), frozenset({1, 2}))
        cmap = CandidateMap(pos=pos, source=CandidateSource.KCN)
        res = check_feasible(3, 2, cmap)
        assert not res.feasible
        assert res.certificate == (0,)

    def test_matches_brute_force_on_random_maps(self):
        rng = np.random.default_rng(77)
        for trial in range(40):
            n = int(rng.integers(4, 10))
            k = int(rng.integers(2, n + 1))
            pos = []
            for i in range(n):
                size = int(rng.integers(1, n + 1))
                pos.append(frozenset(rng.choice(n, size=size, replace=False).tolist()))
            cmap = CandidateMap(pos=tuple(pos), source=CandidateSource.CBS)
            res = check_feasible(n, k, cmap)
            expected = any(
                all(len(set(combo) & pos[i]) >= 2 for i in range(n))
                for combo in itertools.combinations(range(n), k))
            assert res.feasible == expected
            if res.feasible:
                assert len(res.witness) == k
                assert all(len(set(res.witness) & pos[i]) >= 2 for i in range(n))

    def test_k_too_small(self):
        res = check_feasible(3, 1, self.full_map(3))
        assert not res.feasible


class TestSolveRestricted:
    def test_full_candidates_identical_to_exact(self):
        inst = generate_master(25, SpatialProfile.CLUSTERED_TOWNS,
                               np.random.default_rng(3), k=4)
        full = solve_restricted(inst, CandidateMap.full(25))
        exact = solve_exact(inst)
        assert full.status is SolveStatus.OPTIMAL
        assert full.allocation.total_cost == pytest.approx(
            exact.allocation.total_cost, rel=1e-12)
        assert full.allocation.open == exact.allocation.open

    def test_none_candidates_is_exact(self):
        inst = generate_master(12, SpatialProfile.UNIFORM, np.random.default_rng(6), k=3)
        assert solve_restricted(inst, None).allocation.total_cost == pytest.approx(
            solve_exact(inst).allocation.total_cost, rel=1e-12)

    def test_kcn_single_neighbor_infeasible(self):
        inst = generate_master(10, SpatialProfile.UNIFORM, np.random.default_rng(1), k=3)
        cmap = kcn_candidates(inst, 1)
        res = solve_restricted(inst, cmap)
        assert res.status is SolveStatus.INFEASIBLE
        assert res.allocation is None

    def test_restriction_dominance(self):
        rng = np.random.default_rng(19)
        for trial in range(8):
            n = int(rng.integers(10, 18))
            k = int(rng.integers(2, 5))
            inst = generate_master(n, SpatialProfile.UNIFORM,
                                   np.random.default_rng(40 + trial), k=k)
            exact = solve_exact(inst)
            cmap = kcn_candidates(inst, max(3, n // 2))
            res = solve_restricted(inst, cmap)
            if res.status is SolveStatus.OPTIMAL:
                assert res.allocation.total_cost >= exact.allocation.total_cost - 1e-9

    def test_restricted_assignments_respect_candidates(self):
        inst = generate_master(16, SpatialProfile.UNIFORM, np.random.default_rng(9), k=4)
        cmap = sampling_points(inst, 5, 4, np.random.default_rng(2))
        res = solve_restricted(inst, cmap)
        assert res.status is SolveStatus.OPTIMAL
        for i in range(16):
            assert res.allocation.primary[i] in cmap.pos[i]
            assert res.allocation.secondary[i] in cmap.pos[i]

    def test_restricted_value_matches_masked_enumeration(self):
        inst = generate_master(11, SpatialProfile.UNIFORM, np.random.default_rng(29), k=3)
        cmap = kcn_candidates(inst, 6)
        res = solve_restricted(inst, cmap)
        c = inst.cost_matrix().copy()
        for i in range(11):
            for j in range(11):
                if j not in cmap.pos[i]:
                    c[i, j] = np.inf
        val, _ = solve_by_enumeration(c, 3)
        assert res.allocation.total_cost == pytest.approx(val, rel=1e-9)

    def test_warm_start_accepted(self):
        inst = generate_master(20, SpatialProfile.UNIFORM, np.random.default_rng(31), k=4)
        base = solve_exact(inst)
        warm = solve_exact(inst, warm_start=base.allocation.open)
        assert warm.allocation.total_cost == pytest.approx(
            base.allocation.total_cost, rel=1e-12)


class TestSolveMatrix:
    def test_rectangular_matrix(self):
        rng = np.random.default_rng(21)
        c = rng.uniform(0, 10, size=(6, 9))
        res = solve_matrix(c, 3)
        ref, _ = brute_force_value(c, 3)
        assert res.status is SolveStatus.OPTIMAL
        assert res.allocation.total_cost == pytest.approx(ref, rel=1e-9)

    def test_negative_costs_supported(self):
        rng = np.random.default_rng(22)
        c = rng.uniform(-5, 5, size=(5, 7))
        res = solve_matrix(c, 3)
        ref, _ = brute_force_value(c, 3)
        assert res.allocation.total_cost == pytest.approx(ref, rel=1e-9)

    def test_row_with_one_finite_entry_infeasible(self):
        c = np.array([[1.0, np.inf, np.inf],
                      [1.0, 2.0, 3.0]])
        res = solve_matrix(c, 2)
        assert res.status is SolveStatus.INFEASIBLE

    def test_padding_columns_fill_cardinality(self):
        # only two useful columns but k = 3: the open set must still have 3
        c = np.array([[0.0, 1.0, np.inf, np.inf],
                      [1.0, 0.0, np.inf, np.inf]])
        res = solve_matrix(c, 3)
        assert res.status is SolveStatus.OPTIMAL
        assert len(res.allocation.open) == 3
        assert {0, 1} <= set(res.allocation.open)
        assert res.allocation.total_cost == pytest.approx(2.0)

    def test_k_exceeding_columns_raises(self):
        with pytest.raises(ValueError):
            solve_matrix(np.zeros((2, 3)), 4)


class TestSolveResultJson:
    def test_round_trip_fields(self):
        inst = make_instance([(0, 0), (1, 0), (2, 0), (3, 0)], k=2)
        res = solve_exact(inst)
        data = json.loads(res.to_json())
        assert data["status"] == "Optimal"
        assert data["total_cost"] == pytest.approx(8.0)
        assert data["open"] == [1, 2]
        assert len(data["primary"]) == 4
        assert data["wall_time"] >= 0.0

    def test_timings_suppressed(self):
        inst = make_instance([(0, 0), (1, 0), (2, 0)], k=2)
        res = solve_exact(inst)
        data = json.loads(res.to_json(include_timings=False))
        assert data["wall_time"] is None

    def test_infeasible_serialization(self):
        inst = make_instance([(0, 0), (1, 0)], k=1)
        res = solve_exact(inst)
        data = json.loads(res.to_json())
        assert data["status"] == "Infeasible"
        assert data["total_cost"] is None
        assert data["bound"] is None


class TestKcnSweepShape:
    def test_threshold_and_monotonicity_small(self):
        inst = generate_master(40, SpatialProfile.CLUSTERED_TOWNS,
                               np.random.default_rng(61), k=4)
        exact = solve_exact(inst)
        feasible_seen = False
        prev_value = math.inf
        for t in [1, 2, 4, 6, 10, 16, 26, 40]:
            cmap = kcn_candidates(inst, t)
            res = solve_restricted(inst, cmap)
            if res.status is SolveStatus.INFEASIBLE:
                assert not feasible_seen, "feasibility must be monotone in neighbors"
                continue
            feasible_seen = True
            assert res.status is SolveStatus.OPTIMAL
            assert res.allocation.total_cost <= prev_value + 1e-9
            prev_value = res.allocation.total_cost
        assert feasible_seen
        assert prev_value == pytest.approx(exact.allocation.total_cost, rel=1e-9)
