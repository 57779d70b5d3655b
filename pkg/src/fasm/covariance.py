"""Covariance of the raw data implied by a fitted factor-augmented model,
the sample covariance comparator, and the Frobenius loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DimensionError

__all__ = [
    "CovarianceEstimate",
    "coefficient_covariance",
    "factor_covariance",
    "error_covariance_diag",
    "model_covariance",
    "sample_covariance",
    "frobenius_mse",
]


@dataclass(frozen=True)
class CovarianceEstimate:
    """``total = smooth_part + factor_part + error_part``."""

    total: np.ndarray
    smooth_part: np.ndarray
    factor_part: np.ndarray
    error_part: np.ndarray


def _column_covariance(X):
    # (1/(n-1)) X X^T - (1/(n(n-1))) X 1 1^T X^T, columns are observations
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError("expected a 2-d matrix")
    n = X.shape[1]
    if n < 2:
        raise ArgumentError("at least two observations are required")
    s = X.sum(axis=1, keepdims=True)
    cov = X @ X.T / (n - 1) - s @ s.T / (n * (n - 1))
    return 0.5 * (cov + cov.T)


def coefficient_covariance(C_hat):
    """Unbiased covariance of the coefficient vectors (columns of `C_hat`)."""
    return _column_covariance(C_hat)


def factor_covariance(F_hat):
    """Unbiased covariance of the factor vectors (rows of the n x r `F_hat`)."""
    F_hat = np.asarray(F_hat, dtype=float)
    if F_hat.ndim != 2:
        raise DimensionError("F_hat must be n x r")
    if F_hat.shape[1] == 0:
        if F_hat.shape[0] < 2:
            raise ArgumentError("at least two observations are required")
        return np.zeros((0, 0))
    return _column_covariance(F_hat.T)


def error_covariance_diag(E_hat):
    """Diagonal matrix of row mean squares of the p x n residual matrix."""
    E_hat = np.asarray(E_hat, dtype=float)
    if E_hat.ndim != 2 or E_hat.shape[1] < 1:
        raise DimensionError("E_hat must be a p x n matrix with n >= 1")
    return np.diag(np.mean(E_hat**2, axis=1))


def model_covariance(fit, Phi):
    """``Phi S_c Phi^T + A S_f A^T + diag(E E^T / n)`` from a fitted model."""
    Phi = np.asarray(Phi, dtype=float)
    if Phi.shape != (fit.residuals.shape[0], fit.C_hat.shape[0]):
        raise DimensionError("Phi does not match the fit")
    smooth = Phi @ coefficient_covariance(fit.C_hat) @ Phi.T
    A = fit.A_hat
    if A.shape[1]:
        factor = A @ factor_covariance(fit.F_hat) @ A.T
    else:
        factor = np.zeros_like(smooth)
    smooth = 0.5 * (smooth + smooth.T)
    factor = 0.5 * (factor + factor.T)
    error = error_covariance_diag(fit.residuals)
    return CovarianceEstimate(smooth + factor + error, smooth, factor, error)


def sample_covariance(Y):
    """Row-centred unbiased sample covariance of the p x n data matrix."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DimensionError("Y must be a p x n matrix")
    if Y.shape[1] < 2:
        raise ArgumentError("at least two curves are required")
    D = Y - Y.mean(axis=1, keepdims=True)
    S = D @ D.T / (Y.shape[1] - 1)
    return 0.5 * (S + S.T)


def frobenius_mse(estimate, truth, normalization="p"):
    """Scaled squared Frobenius distance between two p x p matrices.

    ``normalization="p"`` divides by ``p``; ``normalization="p2"`` divides by
    ``p**2`` (the mean squared entry).
    """
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape or estimate.ndim != 2:
        raise DimensionError(f"shapes {estimate.shape} and {truth.shape} differ")
    p = estimate.shape[0]
    scale = {"p": p, "p2": p * p}.get(normalization)
    if scale is None:
        raise ArgumentError("normalization must be 'p' or 'p2'")
    return float(np.sum((estimate - truth) ** 2) / scale)
