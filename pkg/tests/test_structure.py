import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from harvestmdp.structure import (
    CHECK_NAMES,
    check_concave_value,
    check_monotone_policy,
    check_monotone_value,
    check_submodularity,
    check_structure,
    near_ties,
    randomized_structure_sweep,
    verify_solution,
    verify_spec,
)
from harvestmdp.solver import value_iteration

value_tables = arrays(
    np.float64,
    st.tuples(st.integers(1, 9), st.integers(1, 4)),
    elements=st.floats(-10, 10, allow_nan=False),
)


def linear(m=8, n=3):
    return np.repeat(np.arange(m, dtype=float)[:, None], n, axis=1)


class TestMonotoneValue:
    def test_constant(self):
        assert check_monotone_value(np.full((5, 3), 2.0), 1e-9)

    def test_inversion_witness(self):
        J = np.minimum(linear(6, 1), 1.0)
        J[3, 0], J[4, 0] = 1.0, 0.9
        res = check_monotone_value(J, 1e-9)
        assert not res
        assert res.witness[:2] == ((3, 1), (4, 1))
        assert res.witness[2:] == (1.0, 0.9)

    def test_channel_axis(self):
        J = np.array([[0.0, 1.0], [2.0, 1.5]])
        assert check_monotone_value(J, 0, "energy")
        res = check_monotone_value(J, 0, "channel")
        assert res.witness[:2] == ((1, 1), (1, 2))

    def test_tolerance(self):
        J = np.array([[1.0], [1.0 - 1e-10]])
        assert check_monotone_value(J, 1e-9)
        assert not check_monotone_value(J, 0.0)

    def test_reference_value(self, reference_spec):
        sol = value_iteration(reference_spec, 1e-9)
        assert check_monotone_value(sol.values, 100 * sol.diagnostics.error_bound)


class TestConcavity:
    def test_linear_passes(self):
        assert check_concave_value(linear())

    def test_square_fails(self):
        res = check_concave_value(linear() ** 2, 1e-9)
        assert not res
        (e0, _), (e1, _), (e2, _), inc0, inc1 = res.witness
        assert (e0, e1, e2) == (0, 1, 2) and inc1 > inc0

    def test_short_tables_pass(self):
        assert check_concave_value(np.array([[0.0], [5.0]]))

    def test_reference_value(self, reference_spec):
        sol = value_iteration(reference_spec, 1e-9)
        assert check_concave_value(sol.values, 100 * sol.diagnostics.error_bound)


class TestSubmodularity:
    def test_single_row_degenerate(self):
        assert check_submodularity(np.array([[3.0, 4.0]]))

    def test_concave_passes(self):
        J = np.sqrt(linear(12, 2))
        assert check_submodularity(J, 0)

    def test_convex_fails_with_quadruple(self):
        J = linear(6, 2) ** 2
        res = check_submodularity(J, 1e-9)
        assert not res
        h, (x, w, z, y), outer, inner = res.witness
        assert x <= w <= z <= y and x + y == w + z
        assert outer == J[x, h - 1] + J[y, h - 1]
        assert outer > inner

    def test_matches_brute_force_enumeration(self):
        # all x <= w <= z <= y with x + y == w + z, enumerated naively
        rng = np.random.default_rng(0)
        for _ in range(30):
            J = rng.normal(size=(6, 2))
            naive = all(
                J[x, j] + J[y, j] <= J[w, j] + J[z, j]
                for j in range(2)
                for x in range(6)
                for w in range(x, 6)
                for z in range(w, 6)
                for y in range(z, 6)
                if x + y == w + z
            )
            assert bool(check_submodularity(J)) == naive

    @settings(max_examples=200)
    @given(J=value_tables)
    def test_concave_implies_submodular(self, J):
        if check_concave_value(J, 0.0):
            assert check_submodularity(J, 1e-9)

    @settings(max_examples=200)
    @given(J=value_tables)
    def test_witnesses_are_genuine(self, J):
        res = check_submodularity(J, 0.0)
        if not res:
            h, (x, w, z, y), _, _ = res.witness
            assert J[x, h - 1] + J[y, h - 1] > J[w, h - 1] + J[z, h - 1]
        res = check_concave_value(J, 0.0)
        if not res:
            (e, h), _, _, inc0, inc1 = res.witness
            assert J[e + 2, h - 1] - J[e + 1, h - 1] > J[e + 1, h - 1] - J[e, h - 1]
        res = check_monotone_value(J, 0.0)
        if not res:
            (e0, h0), (e1, h1), v0, v1 = res.witness
            assert J[e1, h1 - 1] < J[e0, h0 - 1] and (v0, v1) == (J[e0, h0 - 1], J[e1, h1 - 1])

    @given(J=value_tables)
    def test_pure(self, J):
        assert check_structure(J, np.zeros(J.shape, int), 1e-9) == check_structure(J, np.zeros(J.shape, int), 1e-9)


class TestMonotonePolicy:
    def test_spend_all(self):
        assert check_monotone_policy(linear(7, 3).astype(int))

    def test_inversion(self):
        mu = np.repeat(np.arange(8)[:, None], 2, axis=1) // 2
        mu[5, :], mu[6, 0] = 3, 2
        res = check_monotone_policy(mu)
        assert not res and res.witness == ((5, 1), (6, 1), 3, 2)

    def test_reference_policy(self, reference_spec):
        assert check_monotone_policy(value_iteration(reference_spec, 1e-9).policy)


class TestReports:
    def test_reference_report(self, reference_spec):
        sol, rep = verify_spec(reference_spec)
        assert rep.passed, rep.failures()
        assert rep.tolerance_used == pytest.approx(100 * sol.diagnostics.error_bound)
        assert rep.largest_maximizer_monotone is not None

    def test_near_ties_flagged(self, tiny_spec):
        # at J = 0 with zero reward table every feasible power ties
        flat = tiny_spec.with_reward(lambda h, p: 0.0 * np.multiply(h, p))
        assert near_ties(flat, np.zeros(flat.shape), 1e-12) == [(1, 1)]
        assert near_ties(tiny_spec, np.zeros(tiny_spec.shape), 1e-12) == []

    def test_sweep_small(self):
        rep = randomized_structure_sweep(seed=7, n_instances=15, max_capacity=10, max_channels=4, max_recharge=8)
        assert rep.passed, rep.failures
        assert all(rep.check_counts[name] == 15 for name in CHECK_NAMES)

    def test_sweep_empty(self):
        rep = randomized_structure_sweep(seed=1, n_instances=0)
        assert rep.passed and rep.failures == [] and rep.errors == []

    def test_sweep_deterministic(self):
        a = randomized_structure_sweep(seed=3, n_instances=5, max_capacity=8)
        b = randomized_structure_sweep(seed=3, n_instances=5, max_capacity=8)
        assert a == b

    def test_sweep_records_nonconvergence(self):
        rep = randomized_structure_sweep(seed=3, n_instances=3, max_capacity=8, max_iterations=1)
        assert len(rep.errors) == 3 and not rep.passed

    def test_solution_report_uses_hundredfold_bound(self, tiny_spec):
        sol = value_iteration(tiny_spec, 1e-6)
        rep = verify_solution(tiny_spec, sol)
        assert rep.tolerance_used == 100 * sol.diagnostics.error_bound
