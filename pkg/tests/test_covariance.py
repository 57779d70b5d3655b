import numpy as np
import pytest

from fasm.covariance import (
    coefficient_covariance,
    error_covariance_diag,
    factor_covariance,
    frobenius_mse,
    model_covariance,
    sample_covariance,
)
from fasm.basis import evaluate_basis
from fasm.errors import ArgumentError, DimensionError
from fasm.estimator import FasmConfig, fit_fasm
from fasm.simulation import SimulationScenario, generate


def test_identical_columns_give_zero():
    C = np.tile([[1.0], [2.0], [-1.0]], (1, 5))
    np.testing.assert_allclose(coefficient_covariance(C), 0.0, atol=1e-14)


def test_two_point_variance():
    assert coefficient_covariance(np.array([[0.0, 2.0]]))[0, 0] == pytest.approx(2.0)


def test_matches_centred_form(rng):
    C = rng.standard_normal((4, 9))
    D = C - C.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(coefficient_covariance(C), D @ D.T / 8, atol=1e-12)
    F = rng.standard_normal((9, 3))
    np.testing.assert_allclose(factor_covariance(F), np.cov(F.T), atol=1e-12)


def test_single_observation_rejected():
    with pytest.raises(ArgumentError):
        coefficient_covariance(np.ones((3, 1)))
    with pytest.raises(ArgumentError):
        sample_covariance(np.ones((3, 1)))


def test_no_factors():
    assert factor_covariance(np.zeros((5, 0))).shape == (0, 0)
    assert np.all(factor_covariance(np.ones((5, 2))) == 0)


def test_error_diagonal():
    E = np.array([[1.0, 1.0], [0.0, 2.0]])
    np.testing.assert_allclose(error_covariance_diag(E), np.diag([1.0, 2.0]))
    assert np.all(error_covariance_diag(np.zeros((3, 4))) == 0)


def test_sample_covariance_hand_value():
    assert sample_covariance(np.array([[1.0, 2.0, 3.0]]))[0, 0] == pytest.approx(1.0)
    assert np.linalg.eigvalsh(sample_covariance(np.random.default_rng(0).standard_normal((6, 4)))).min() > -1e-12


def test_frobenius_scaling():
    assert frobenius_mse(np.eye(2), np.zeros((2, 2))) == pytest.approx(1.0)
    assert frobenius_mse(np.eye(2), np.zeros((2, 2)), "p2") == pytest.approx(0.5)
    T = np.arange(9.0).reshape(3, 3)
    assert frobenius_mse(T, T) == 0.0
    assert frobenius_mse(3 * T, 0 * T) == pytest.approx(9 * frobenius_mse(T, 0 * T))
    with pytest.raises(DimensionError):
        frobenius_mse(np.eye(2), np.eye(3))


@pytest.mark.parametrize("sigma", [0.0, 1.0])
def test_model_covariance_decomposition(sigma):
    data = generate(SimulationScenario("setting1", 30, 51, sigma, seed=5))
    fit = fit_fasm(data.Y, data.fitting_system, data.grid)
    est = model_covariance(fit, evaluate_basis(data.fitting_system, data.grid))
    np.testing.assert_allclose(est.total, est.smooth_part + est.factor_part + est.error_part, atol=1e-10)
    assert np.array_equal(est.total, est.total.T)
    assert np.count_nonzero(est.error_part - np.diag(np.diag(est.error_part))) == 0
    assert np.all(np.diag(est.error_part) >= 0)
    for part in (est.smooth_part, est.factor_part):
        eig = np.linalg.eigvalsh(part)
        assert eig.min() >= -1e-10 * max(1.0, eig.max())


def test_zero_factor_fit_has_no_factor_part():
    data = generate(SimulationScenario("setting1", 20, 51, 0.0, seed=1))
    fit = fit_fasm(data.Y, data.fitting_system, data.grid, FasmConfig(factor_rule="none"))
    Phi = evaluate_basis(data.fitting_system, data.grid)
    est = model_covariance(fit, Phi)
    assert np.all(est.factor_part == 0)
    np.testing.assert_array_equal(est.total, est.smooth_part + est.error_part)


def test_error_shrinks_with_n():
    def mean_loss(n):
        out = []
        for seed in range(6):
            data = generate(SimulationScenario("setting1", n, 51, 0.5, seed=seed))
            fit = fit_fasm(data.Y, data.fitting_system, data.grid)
            est = model_covariance(fit, evaluate_basis(data.fitting_system, data.grid)).total
            out.append(frobenius_mse(est, data.population_covariance, "p2"))
        return np.mean(out)

    assert mean_loss(100) < mean_loss(20)
