"""Principal-component loadings, factor-count selection and the complementary
projector of a loading matrix.

Loadings are normalized so that ``A.T @ A / p`` is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DimensionError

__all__ = [
    "EigenSpectrum",
    "residual_second_moment",
    "principal_loadings",
    "select_num_factors",
    "default_kmax",
    "auto_num_factors",
    "projection_complement",
]


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigenvalues in nonincreasing order with matching orthonormal vectors."""

    values: np.ndarray
    vectors: np.ndarray


def residual_second_moment(Y, Phi, C):
    """Uncentered second moment ``(Y - Phi C)(Y - Phi C)^T / (n p)`` of the
    smoothing residuals."""
    Y = np.asarray(Y, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    C = np.asarray(C, dtype=float)
    if Y.ndim != 2 or Phi.ndim != 2 or C.ndim != 2:
        raise DimensionError("Y, Phi and C must be 2-d")
    p, n = Y.shape
    if Phi.shape[0] != p or Phi.shape[1] != C.shape[0] or C.shape[1] != n:
        raise DimensionError(
            f"shapes Y{Y.shape}, Phi{Phi.shape}, C{C.shape} are not conformable"
        )
    Z = Y - Phi @ C
    S = Z @ Z.T / (n * p)
    return 0.5 * (S + S.T)


def _fix_signs(vectors):
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def principal_loadings(S, r):
    """Top-`r` eigenvectors of `S` scaled by ``sqrt(p)``.

    Returns ``(A, spectrum)``.  Each loading column has its largest-magnitude
    entry positive; `spectrum` holds the full eigen-decomposition of `S` in
    nonincreasing order with tiny negative eigenvalues clipped to zero.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError("S must be a square matrix")
    p = S.shape[0]
    if int(r) != r or r < 0 or r > p:
        raise ArgumentError(f"number of factors must be in [0, {p}], got {r!r}")
    r = int(r)
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    vals = np.clip(vals[::-1], 0.0, None)
    vecs = _fix_signs(vecs[:, ::-1])
    A = np.sqrt(p) * vecs[:, :r]
    return A, EigenSpectrum(vals, vecs)


def select_num_factors(eigenvalues, kmax, q=0.5):
    """Modified eigenvalue-ratio choice of the number of factors.

    With ``ER(k) = v_k / v_{k+1}`` for ``k = 1..kmax`` and ``ER_1 >= ER_2`` the
    two largest ratios, returns ``argmax_k ER(k)`` (smallest `k` on ties) when
    ``(ER_1 - ER_2) / ER_1 > q`` and 0 otherwise.

    >>> select_num_factors([10, 1, 1, 1], kmax=2)
    1
    """
    v = np.asarray(eigenvalues, dtype=float).ravel()
    if int(kmax) != kmax or kmax < 2:
        raise ArgumentError(f"kmax must be an integer >= 2, got {kmax!r}")
    kmax = int(kmax)
    if not 0.0 < q < 1.0:
        raise ArgumentError(f"q must lie in (0, 1), got {q!r}")
    if v.size < kmax + 1:
        raise ArgumentError(f"need at least kmax + 1 = {kmax + 1} eigenvalues")
    head = v[: kmax + 1]
    if np.any(head <= 0) or not np.all(np.isfinite(head)):
        raise ArgumentError("the first kmax + 1 eigenvalues must be positive")
    if np.any(np.diff(head) > 0):
        raise ArgumentError("eigenvalues must be nonincreasing")
    ratios = head[:-1] / head[1:]
    order = np.sort(ratios)[::-1]
    er1, er2 = order[0], order[1]
    if (er1 - er2) / er1 > q:
        return int(np.argmax(ratios)) + 1
    return 0


def default_kmax(n, p):
    """Default search bound ``min(8, floor(min(n, p) / 2))``."""
    return min(8, min(int(n), int(p)) // 2)


def auto_num_factors(eigenvalues, kmax, q=0.5, rtol=1e-10):
    """:func:`select_num_factors` on a spectrum that may contain zeros.

    Eigenvalues at or below ``rtol`` times the largest are dropped and `kmax`
    is reduced to fit what remains.  Fewer than two usable ratios mean no
    factor structure can be detected, so 0 is returned.
    """
    v = np.asarray(eigenvalues, dtype=float)
    if v.size == 0 or v[0] <= 0:
        return 0
    positive = int(np.count_nonzero(v > rtol * v[0]))
    k = min(int(kmax), positive - 1)
    if k < 2:
        return 0
    return select_num_factors(v[: k + 1], k, q)


def projection_complement(A, p=None):
    """Projector ``I - A A^T / p`` onto the complement of the loading space.

    `A` must satisfy ``A^T A / p = I`` to 1e-6; an empty loading matrix gives
    the identity (pass `p` when `A` is ``None``).
    """
    if A is None:
        if p is None:
            raise ArgumentError("p is required when A is None")
        return np.eye(int(p))
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError("loadings must be a 2-d array")
    p, r = A.shape
    if r == 0:
        return np.eye(p)
    gram = A.T @ A / p
    if np.max(np.abs(gram - np.eye(r))) > 1e-6:
        raise ArgumentError("loadings violate the normalization A^T A / p = I")
    M = np.eye(p) - A @ A.T / p
    return 0.5 * (M + M.T)
