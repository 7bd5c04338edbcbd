"""Unit tests for the damped Picard solver."""

from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from nioperator.errors import DimensionError, SolverDivergenceError
from nioperator.fixed_point import SolverConfig, residual, solve
from nioperator.integral_operator import KernelParams, operator_closure
from nioperator.quadrature import make_grid
from nioperator.tensor import Tensor, grad_check


pytestmark = pytest.mark.unit


def _linear(a: np.ndarray):
    """Row-vector linear map u -> u @ A."""
    matrix = Tensor(a)
    return lambda u: u @ matrix


def _contraction(n: int, lipschitz: float, seed: int) -> np.ndarray:
    """Random n x n matrix with spectral norm ``lipschitz``."""
    a = np.random.default_rng(seed).normal(size=(n, n))
    return lipschitz * a / np.linalg.norm(a, 2)


class TestSolverConfig:
    def test_defaults(self):
        cfg = SolverConfig()
        assert (cfg.max_iters, cfg.damping, cfg.tol, cfg.divergence_factor) == (8, 1.0, 1e-6, 1e3)

    @pytest.mark.parametrize("field,value", [
        ("max_iters", 0),
        ("damping", 0.0),
        ("damping", 1.5),
        ("tol", 0.0),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(ValidationError):
            SolverConfig(**{field: value})


class TestSolve:
    def test_zero_operator_converges_immediately(self, rng):
        u_lat = Tensor(rng.normal(size=(3, 2)))
        result = solve(lambda u: u * 0.0, u_lat)
        np.testing.assert_array_equal(result.u_star.data, u_lat.data)
        assert result.converged
        assert result.iters_used == 1
        assert result.residual_history == [0.0]

    def test_scalar_half_contraction(self):
        result = solve(lambda u: u * 0.5, Tensor([[1.0]]), SolverConfig(max_iters=60, tol=1e-12))
        assert result.converged
        assert result.u_star.item() == pytest.approx(2.0, abs=1e-11)
        history = np.array(result.residual_history)
        np.testing.assert_allclose(history[1:] / history[:-1], 0.5, rtol=1e-9)

    def test_non_contraction_diverges(self):
        with pytest.raises(SolverDivergenceError, match="iteration") as excinfo:
            solve(lambda u: u * 2.0, Tensor([[1.0]]), SolverConfig(max_iters=20))
        assert excinfo.value.residual > excinfo.value.threshold
        assert excinfo.value.iteration == 11

    def test_budget_exhausted_is_not_converged(self):
        result = solve(lambda u: u * 0.9, Tensor([[1.0]]), SolverConfig(max_iters=3))
        assert not result.converged
        assert result.iters_used == 3
        assert result.final_residual == pytest.approx(0.9**3, rel=1e-12)

    def test_damping_still_reaches_fixed_point(self):
        result = solve(lambda u: u * 0.5, Tensor([[1.0]]), SolverConfig(max_iters=200, damping=0.5, tol=1e-12))
        assert result.converged
        assert result.u_star.item() == pytest.approx(2.0, abs=1e-10)

    def test_shape_changing_operator(self):
        with pytest.raises(DimensionError):
            solve(lambda u: u.reshape(-1), Tensor(np.ones((2, 2))))

    def test_deterministic(self, rng):
        a = _contraction(4, 0.7, seed=1)
        u_lat = Tensor(rng.normal(size=(1, 4)))
        first = solve(_linear(a), u_lat)
        second = solve(_linear(a), u_lat)
        np.testing.assert_array_equal(first.u_star.data, second.u_star.data)
        assert first.residual_history == second.residual_history


class TestLinearContractionOracle:
    """Residual decay and the analytic solution u_lat (I - A)^-1."""

    @pytest.mark.parametrize("lipschitz", [0.3, 0.5, 0.9])
    def test_scalar(self, lipschitz):
        cfg = SolverConfig(max_iters=400, tol=1e-12)
        result = solve(lambda u: u * lipschitz, Tensor([[1.0]]), cfg)
        history = np.array(result.residual_history)
        bound = 1.01 * lipschitz ** np.arange(history.size) * history[0]
        assert np.all(history <= bound)
        assert result.u_star.item() == pytest.approx(1.0 / (1.0 - lipschitz), abs=1e-6)

    @pytest.mark.parametrize("lipschitz", [0.3, 0.5, 0.9])
    def test_four_by_four(self, lipschitz, rng):
        a = _contraction(4, lipschitz, seed=int(10 * lipschitz))
        u_lat = rng.normal(size=(1, 4))
        result = solve(_linear(a), Tensor(u_lat), SolverConfig(max_iters=400, tol=1e-12))
        history = np.array(result.residual_history)
        bound = 1.01 * lipschitz ** np.arange(history.size) * history[0]
        assert np.all(history <= bound)
        np.testing.assert_allclose(result.u_star.data, u_lat @ np.linalg.inv(np.eye(4) - a), atol=1e-6)

    def test_expansive_matrix_diverges(self, rng):
        with pytest.raises(SolverDivergenceError):
            solve(_linear(2.0 * np.eye(4)), Tensor(rng.normal(size=(1, 4))), SolverConfig(max_iters=40))


class TestResidual:
    def test_zero_case(self):
        zeros = Tensor(np.zeros((2, 2)))
        assert residual(lambda u: u * 0.0, zeros, zeros) == 0.0

    def test_scalar_half(self):
        assert residual(lambda u: u * 0.5, Tensor([[1.0]]), Tensor([[1.0]])) == pytest.approx(0.5)

    def test_converged_solution_is_within_tol(self):
        op = lambda u: u * 0.5
        u_lat = Tensor([[1.0, -2.0]])
        cfg = SolverConfig(max_iters=80, tol=1e-9)
        result = solve(op, u_lat, cfg)
        assert residual(op, result.u_star, u_lat) <= cfg.tol

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            residual(lambda u: u, Tensor(np.ones((2, 2))), Tensor(np.ones((2, 3))))


class TestSolveGradients:
    def test_gradient_wrt_u_lat_linear(self, rng):
        a = _contraction(3, 0.6, seed=4)
        weights = Tensor(rng.normal(size=(1, 3)))
        cfg = SolverConfig(max_iters=200, tol=1e-13)
        error = grad_check(lambda u_lat: (solve(_linear(a), u_lat, cfg).u_star * weights).sum(), rng.normal(size=(1, 3)))
        assert error < 1e-4

    def test_gradient_wrt_u_lat_through_operator(self, rng):
        grid = make_grid(3, 1, 2)
        params = KernelParams.init(np.random.default_rng(2), 3, 4, 5, gamma=5.0)
        weights = Tensor(rng.normal(size=(6, 3)))
        cfg = SolverConfig(max_iters=60, tol=1e-13)

        def f(u_lat: Tensor) -> Tensor:
            return (solve(operator_closure(params, grid), u_lat, cfg).u_star * weights).sum()

        assert grad_check(f, rng.normal(size=(6, 3))) < 1e-4
