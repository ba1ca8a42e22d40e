import numpy as np
import pytest

from mfgtorus.errors import ConvergenceError
from mfgtorus.grid import ScalarField, TorusGrid, gradient, integrate, laplacian, roll_field
from mfgtorus.hjb import ErgodicHJBProblem, hjb_residual, solve_ergodic_hjb
from mfgtorus.model import HamiltonianSpec, h_eval

HAM = HamiltonianSpec(2.0)


def solve(grid, rhs, **kw):
    return solve_ergodic_hjb(ErgodicHJBProblem(grid, HAM, rhs), **kw)


class TestConstantRight:
    def test_constants_solve_exactly(self):
        g = TorusGrid(1, 64)
        sol = solve(g, ScalarField.constant(g, 1.3), tol=1e-10)
        assert abs(sol.lam - 1.3) < 1e-12
        assert np.max(np.abs(sol.u.values)) < 1e-12

    def test_mean_zero_normalization(self):
        g = TorusGrid(1, 64)
        rng = np.random.default_rng(0)
        rhs = ScalarField.from_function(g, lambda x: 0.4 * np.sin(2 * np.pi * x))
        sol = solve(g, rhs, tol=1e-9)
        assert abs(integrate(sol.u)) <= 1e-12


class TestManufacturedSolution:
    def test_recovers_discrete_solution(self):
        g = TorusGrid(1, 256)
        ustar = ScalarField.from_function(g, lambda x: 0.1 * np.cos(2 * np.pi * x))
        rhs = ScalarField(g, -laplacian(ustar).values + h_eval(HAM, gradient(ustar).values))
        sol = solve(g, rhs, tol=1e-9)
        assert abs(sol.lam) <= 1e-7
        assert np.max(np.abs(sol.u.values - ustar.values)) <= 1e-7


class TestDenseNewtonOracle:
    def test_small_grid_agreement(self):
        g = TorusGrid(1, 8)
        n, h = g.n, g.h
        rv = 0.5 * np.sin(2 * np.pi * g.axis_coords()) + 0.3 * np.cos(4 * np.pi * g.axis_coords())
        eye = np.eye(n)
        D = (np.roll(eye, -1, 1) - np.roll(eye, 1, 1)) / (2 * h)
        L = (np.roll(eye, -1, 1) - 2 * eye + np.roll(eye, 1, 1)) / h**2

        def system(z):
            u, lam = z[:n], z[n]
            return np.concatenate([-(L @ u) + 0.5 * (D @ u) ** 2 + lam - rv, [u.sum()]])

        def jac(z):
            u = z[:n]
            J = np.zeros((n + 1, n + 1))
            J[:n, :n] = -L + np.diag(D @ u) @ D
            J[:n, n] = 1.0
            J[n, :n] = 1.0
            return J

        z = np.zeros(n + 1)
        for _ in range(60):
            step = np.linalg.solve(jac(z), -system(z))
            z += step
            if np.max(np.abs(step)) < 1e-14:
                break
        assert np.max(np.abs(system(z))) < 1e-12

        sol = solve(g, ScalarField(g, rv), tol=1e-12)
        assert np.max(np.abs(sol.u.values - z[:n])) < 1e-8
        assert abs(sol.lam - z[n]) < 1e-8


class TestResidual:
    def test_exact_constant_pair(self):
        g = TorusGrid(1, 32)
        u0 = ScalarField.constant(g, 0.0)
        assert hjb_residual(u0, 2.0, ScalarField.constant(g, 2.0), HAM) == 0.0

    def test_unit_offset(self):
        g = TorusGrid(1, 32)
        u0 = ScalarField.constant(g, 0.0)
        assert hjb_residual(u0, 0.0, ScalarField.constant(g, 1.0), HAM) == pytest.approx(1.0)

    def test_recomputation_matches_stored(self):
        g = TorusGrid(1, 64)
        rhs = ScalarField.from_function(g, lambda x: 0.3 * np.cos(2 * np.pi * x))
        sol = solve(g, rhs, tol=1e-9)
        assert hjb_residual(sol.u, sol.lam, rhs, HAM) == sol.residual_inf


class TestInvariances:
    def test_shift_of_right_hand_side(self):
        g = TorusGrid(1, 64)
        rhs = ScalarField.from_function(g, lambda x: 0.4 * np.sin(2 * np.pi * x))
        shifted = ScalarField(g, rhs.values + 0.7)
        a = solve(g, rhs, tol=1e-10)
        b = solve(g, shifted, tol=1e-10)
        assert abs(b.lam - a.lam - 0.7) <= 1e-10
        assert np.max(np.abs(b.u.values - a.u.values)) <= 1e-10

    def test_multiplier_monotone_in_rhs(self):
        g = TorusGrid(1, 64)
        r1 = ScalarField.from_function(g, lambda x: 0.3 * np.cos(2 * np.pi * x))
        bump = 0.2 * (1 + np.sin(2 * np.pi * g.axis_coords()))  # nonnegative
        r2 = ScalarField(g, r1.values + bump)
        a = solve(g, r1, tol=1e-10)
        b = solve(g, r2, tol=1e-10)
        assert a.lam <= b.lam + 1e-8

    def test_multiplier_bounded_by_mean(self):
        g = TorusGrid(1, 64)
        rhs = ScalarField.from_function(g, lambda x: 0.5 * np.cos(2 * np.pi * x) + 0.2)
        sol = solve(g, rhs, tol=1e-10)
        assert sol.lam <= integrate(rhs) + 1e-8

    def test_translation_equivariance(self):
        g = TorusGrid(1, 64)
        rhs = ScalarField.from_function(g, lambda x: 0.4 * np.sin(2 * np.pi * x))
        a = solve(g, rhs, tol=1e-10)
        b = solve(g, roll_field(rhs, 9), tol=1e-10)
        assert abs(a.lam - b.lam) <= 1e-10
        assert np.max(np.abs(b.u.values - roll_field(a.u, 9).values)) <= 1e-10


class TestErrors:
    def test_nonpositive_dt_rejected(self):
        g = TorusGrid(1, 32)
        with pytest.raises(ValueError):
            solve(g, ScalarField.constant(g, 0.0), dt=-0.1)

    def test_conditioning_check(self):
        g = TorusGrid(1, 32)
        with pytest.raises(ValueError):
            solve(g, ScalarField.constant(g, 0.0), dt=1e14)

    def test_nonconvergence_carries_residual(self):
        g = TorusGrid(1, 64)
        rhs = ScalarField.from_function(g, lambda x: np.sin(2 * np.pi * x))
        with pytest.raises(ConvergenceError) as err:
            solve(g, rhs, tol=1e-13, max_steps=3)
        assert err.value.residual is not None and err.value.residual > 0
