import itertools
import math

import numpy as np
import pytest

from duocover.reductions import (DcpInstance, HittingSetInstance, ScpInstance,
                                 beta_below_costs, dcp_cost_matrix,
                                 hitting_set_to_scp,
                                 random_hitting_set_instance,
                                 random_scp_instance, scp_to_dcp,
                                 solve_dcp_enumeration, solve_hitting_set,
                                 solve_scp)
from duocover.solver import solve_matrix


class TestHittingSetToScp:
    def test_overlapping_singletons_yes(self):
        hs = HittingSetInstance(universe_size=2,
                                sets=(frozenset({0}), frozenset({0, 1})), m=1)
        scp = hitting_set_to_scp(hs)
        assert scp.costs == ((0.0, 1.0), (0.0, 0.0))
        assert scp.k == 1 and scp.phi == 0.0
        yes, opt = solve_scp(scp)
        assert yes and opt == 0.0
        assert solve_hitting_set(hs)

    def test_disjoint_singletons_no(self):
        hs = HittingSetInstance(universe_size=2,
                                sets=(frozenset({0}), frozenset({1})), m=1)
        yes, opt = solve_scp(hitting_set_to_scp(hs))
        assert not yes and opt == 1.0
        assert not solve_hitting_set(hs)

    def test_random_instances_agree_with_double_enumeration(self):
        rng = np.random.default_rng(2024)
        for _ in range(40):
            hs = random_hitting_set_instance(rng)
            scp = hitting_set_to_scp(hs)
            yes_scp, _ = solve_scp(scp)
            assert yes_scp == solve_hitting_set(hs)

    def test_validation(self):
        with pytest.raises(ValueError):
            HittingSetInstance(universe_size=2, sets=(frozenset({5}),), m=1)
        with pytest.raises(ValueError):
            HittingSetInstance(universe_size=2, sets=(), m=3)


class TestBeta:
    def test_strictly_below_all_costs(self):
        costs = ((3.0, 5.0), (8.0, 4.0))
        beta = beta_below_costs(costs)
        assert all(beta < v for row in costs for v in row)

    def test_zero_minimum_gives_negative_beta(self):
        beta = beta_below_costs(((0.0, 1.0),))
        assert beta == -1.0

    def test_large_costs_scale_margin(self):
        beta = beta_below_costs(((1e7, 2e7),))
        assert beta < 1e7
        assert beta == pytest.approx(1e7 - 1e4)


class TestScpToDcp:
    def test_small_transform_shape(self):
        scp = ScpInstance(costs=((0.0, 1.0), (0.0, 0.0)), k=1, phi=0.0)
        dcp, beta = scp_to_dcp(scp)
        assert dcp.n_cols == 3 and dcp.k == 2
        assert dcp.phi == pytest.approx(0.0 + 2 * beta)
        assert all(row[-1] == beta for row in dcp.costs)
        yes_scp, _ = solve_scp(scp)
        yes_dcp, _ = solve_dcp_enumeration(dcp)
        assert yes_scp == yes_dcp

    def test_uniform_costs_always_yes(self):
        scp = ScpInstance(costs=((5.0, 5.0), (5.0, 5.0), (5.0, 5.0)), k=1, phi=15.0)
        dcp, _ = scp_to_dcp(scp)
        assert solve_scp(scp)[0]
        assert solve_dcp_enumeration(dcp)[0]

    def test_value_identity_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            scp = random_scp_instance(rng)
            dcp, beta = scp_to_dcp(scp)
            _, opt_scp = solve_scp(scp)
            _, opt_dcp = solve_dcp_enumeration(dcp)
            # integer costs make the identity exact in floating point
            assert opt_dcp == opt_scp + scp.n_rows * beta

    def test_decisions_agree(self):
        rng = np.random.default_rng(8)
        for _ in range(40):
            scp = random_scp_instance(rng)
            dcp, _ = scp_to_dcp(scp)
            assert solve_scp(scp)[0] == solve_dcp_enumeration(dcp)[0]

    def test_extra_node_is_universal_primary(self):
        rng = np.random.default_rng(9)
        for _ in range(15):
            scp = random_scp_instance(rng, max_rows=4, max_cols=5)
            dcp, beta = scp_to_dcp(scp)
            _, opt = solve_dcp_enumeration(dcp)
            s = dcp.n_cols - 1
            # every optimal open set contains s, and s is each row's primary
            for combo in itertools.combinations(range(dcp.n_cols), dcp.k):
                total = sum(sorted(row[j] for j in combo)[0]
                            + sorted(row[j] for j in combo)[1]
                            for row in dcp.costs)
                if total == opt:
                    assert s in combo
                    for row in dcp.costs:
                        assert min(row[j] for j in combo) == beta

    def test_branch_and_bound_agrees_with_enumeration(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            scp = random_scp_instance(rng)
            dcp, beta = scp_to_dcp(scp)
            res = solve_matrix(dcp_cost_matrix(dcp), dcp.k)
            _, opt = solve_dcp_enumeration(dcp)
            assert res.allocation.total_cost == pytest.approx(opt, rel=1e-12, abs=1e-9)
            _, opt_scp = solve_scp(scp)
            assert res.allocation.total_cost == pytest.approx(
                opt_scp + scp.n_rows * beta, rel=1e-12, abs=1e-9)


class TestEnumerationGuards:
    def test_scp_size_guard(self):
        costs = tuple(tuple(float(j) for j in range(25)) for _ in range(2))
        with pytest.raises(ValueError):
            solve_scp(ScpInstance(costs=costs, k=2, phi=0.0))

    def test_dcp_k_below_two_infeasible(self):
        dcp = DcpInstance(costs=((1.0, 2.0),), k=1, phi=100.0)
        yes, opt = solve_dcp_enumeration(dcp)
        assert not yes and opt == math.inf

    def test_scp_all_columns(self):
        scp = ScpInstance(costs=((1.0, 3.0), (4.0, 2.0)), k=2, phi=10.0)
        yes, opt = solve_scp(scp)
        assert yes and opt == pytest.approx(3.0)
