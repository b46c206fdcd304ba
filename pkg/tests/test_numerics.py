import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cvx_objective, random_instance, random_orthonormal, scalar_grid_objective
from sphere_precoding.numerics import (
    ConeProblem,
    RankDeficientError,
    SolveStatus,
    SolverTolerances,
    cone_solve,
    hermitian_eig,
    pseudo_inverse,
)


def tol_gap(level, r):
    return 1e-4 * max(1.0, level * np.sqrt(r))


class TestHermitianEig:
    def test_diag(self):
        vecs, vals = hermitian_eig(np.diag([1.0, 3.0, 2.0]).astype(complex))
        np.testing.assert_allclose(vals, [3, 2, 1])
        assert abs(vecs[1, 0]) == pytest.approx(1.0)

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        r = x @ x.conj().T
        vecs, vals = hermitian_eig(r)
        np.testing.assert_allclose((vecs * vals) @ vecs.conj().T, r, atol=1e-10)
        assert np.all(np.diff(vals) <= 0)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            hermitian_eig(np.array([[1, 2], [0, 1]], dtype=complex))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            hermitian_eig(np.array([[np.nan]]))


class TestPseudoInverse:
    def test_left_inverse(self):
        rng = np.random.default_rng(1)
        h = rng.normal(size=(8, 3)) + 1j * rng.normal(size=(8, 3))
        np.testing.assert_allclose(pseudo_inverse(h) @ h, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(pseudo_inverse(h), np.linalg.pinv(h), atol=1e-12)

    def test_rank_deficient_names_column(self):
        rng = np.random.default_rng(2)
        h = rng.normal(size=(6, 3)) + 0j
        h[:, 2] = 2 * h[:, 0]
        with pytest.raises(RankDeficientError) as info:
            pseudo_inverse(h)
        assert info.value.column in (0, 2)

    def test_wide_rejected(self):
        with pytest.raises(ValueError):
            pseudo_inverse(np.ones((2, 3)))


class TestConeAnalytic:
    def test_rank_one_reaches_zero(self):
        u = random_orthonormal(np.random.default_rng(3), 8, 1)
        sol = cone_solve(ConeProblem(u.conj().T, 1.0))
        assert sol.optimal
        assert sol.objective_value == pytest.approx(0.0, abs=1e-5)
        np.testing.assert_allclose(sol.vector, u[:, 0], atol=1e-5)

    def test_rank_four_rescaled(self):
        u = random_orthonormal(np.random.default_rng(4), 10, 4)
        sol = cone_solve(ConeProblem(u.conj().T, 1.0))
        assert sol.objective_value == pytest.approx(1.0, abs=1e-5)
        np.testing.assert_allclose(u.conj().T @ sol.vector, np.full(4, 0.5), atol=1e-5)

    def test_identical_interference_block(self):
        u = random_orthonormal(np.random.default_rng(5), 6, 1).conj().T
        sol = cone_solve(ConeProblem(u, 1.0, [(u, 1e-3)]))
        assert sol.optimal
        assert sol.objective_value == pytest.approx(0.999, abs=1e-5)
        assert sol.objective_value == pytest.approx(scalar_grid_objective(1e-3), abs=1e-5)

    def test_zero_cap_forces_null(self):
        rng = np.random.default_rng(6)
        u = random_orthonormal(rng, 6, 2).conj().T
        b = random_orthonormal(rng, 6, 2).conj().T
        sol = cone_solve(ConeProblem(u, 0.5, [(b, 0.0)]))
        assert sol.optimal
        assert np.linalg.norm(b @ sol.vector) < 1e-10

    def test_negative_cap_infeasible(self):
        u = np.eye(2, dtype=complex)[:1]
        assert cone_solve(ConeProblem(u, 1.0, [(u, -1.0)])).status is SolveStatus.INFEASIBLE
        assert cone_solve(ConeProblem(u, 1.0, power_cap=0.0)).status is SolveStatus.INFEASIBLE

    def test_iteration_cap_reported(self):
        rng = np.random.default_rng(7)
        u = random_orthonormal(rng, 8, 3).conj().T
        b = random_orthonormal(rng, 8, 3).conj().T
        sol = cone_solve(ConeProblem(u, 1.0, [(b, 1e-3)]), SolverTolerances(max_iterations=2))
        assert sol.status is SolveStatus.MAX_ITERATIONS
        assert np.linalg.norm(sol.vector) <= 1.0

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            cone_solve(ConeProblem(np.eye(3, dtype=complex), 1.0, [(np.eye(2), 0.1)]))


def check_constraints(problem, f):
    assert np.linalg.norm(f) <= problem.power_cap * (1 + 1e-9)
    for b, e in problem.interference_blocks:
        assert np.linalg.norm(b @ f) <= e * (1 + 1e-6) + 1e-12


class TestConeRandomized:
    def test_against_conic_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(40):
            a, level, blocks = random_instance(rng)
            problem = ConeProblem(a, level, blocks)
            sol = cone_solve(problem)
            assert sol.optimal
            check_constraints(problem, sol.vector)
            assert sol.objective_value == pytest.approx(cvx_objective(a, level, blocks), abs=1e-4)

    def test_deterministic(self):
        a, level, blocks = random_instance(np.random.default_rng(11))
        s1 = cone_solve(ConeProblem(a, level, blocks))
        s2 = cone_solve(ConeProblem(a.copy(), level, [(b.copy(), e) for b, e in blocks]))
        assert s1.vector.tobytes() == s2.vector.tobytes()

    def test_no_blocks_matches_closed_form(self):
        rng = np.random.default_rng(12)
        for r in range(1, 5):
            for level in (0.3, 1.0):
                u = random_orthonormal(rng, 12, r)
                sol = cone_solve(ConeProblem(u.conj().T, level))
                c = level if level * np.sqrt(r) <= 1 else 1 / np.sqrt(r)
                np.testing.assert_allclose(sol.vector, u @ np.full(r, c), atol=1e-5)

    def test_local_optimality_probe(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            a, level, blocks = random_instance(rng)
            problem = ConeProblem(a, level, blocks)
            sol = cone_solve(problem)
            gap = tol_gap(level, a.shape[0])
            n = a.shape[1]
            for _ in range(200):
                d = rng.normal(size=n) + 1j * rng.normal(size=n)
                g = sol.vector + 1e-3 * d / np.linalg.norm(d)
                feasible = np.linalg.norm(g) <= 1 and all(np.linalg.norm(b @ g) <= e for b, e in blocks)
                if feasible:
                    assert problem.objective(g) >= sol.objective_value - gap

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_monotone_in_cap(self, seed):
        rng = np.random.default_rng(seed)
        a, level, blocks = random_instance(rng)
        if not blocks:
            blocks = [(random_orthonormal(rng, a.shape[1], 1).conj().T, 1.0)]
        values = []
        for eps in (1e-4, 1e-3, 1e-2):
            values.append(cone_solve(ConeProblem(a, level, [(b, eps) for b, _ in blocks])).objective_value)
        gap = tol_gap(level, a.shape[0])
        assert values[1] <= values[0] + gap
        assert values[2] <= values[1] + gap

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_global_phase_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a, level, blocks = random_instance(rng, n_max=8)
        # a unit-modulus factor on an eigenvector is a row phase of its block
        rotated_blocks = [(np.exp(1j * rng.uniform(0, 2 * np.pi, (b.shape[0], 1))) * b, e) for b, e in blocks]
        base = cone_solve(ConeProblem(a, level, blocks)).objective_value
        rotated = cone_solve(ConeProblem(a, level, rotated_blocks)).objective_value
        assert rotated == pytest.approx(base, abs=1e-6)
