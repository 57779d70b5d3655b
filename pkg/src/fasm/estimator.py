"""Factor-augmented penalized basis smoothing.

The estimator alternates between

1. a penalized least-squares solve for the basis coefficients on data
   projected away from the current loading space, with the penalty weight
   chosen by mean generalized cross-validation (mGCV), and
2. principal components of the smoothing residuals, giving new loadings.

With the factor component switched off the procedure is the ordinary
penalized basis smoother ("Bsmooth").
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .basis import as_grid, evaluate_basis, penalty_matrix
from .errors import (
    ArgumentError,
    DegenerateTuningError,
    DimensionError,
    NonFiniteDataError,
    SingularityError,
)
from .factor import (
    auto_num_factors,
    default_kmax,
    principal_loadings,
    projection_complement,
    residual_second_moment,
)

__all__ = [
    "FasmConfig",
    "FasmFit",
    "AlphaSelection",
    "default_alpha_grid",
    "default_delta",
    "ridge_smooth",
    "equivalent_df",
    "mgcv_score",
    "select_alpha",
    "fit_fasm",
    "fit_bsmooth",
    "estimate_factors",
    "fitted_curves",
    "model_df",
    "penalized_projected_ssr",
]

# Condition number above which a penalized system is treated as singular.
MAX_CONDITION = 1e12

FACTOR_RULES = ("auto", "fixed", "none")
SSE_KINDS = ("projected", "raw")


def default_alpha_grid(p, K, size=40):
    """`size` log-spaced penalty weights spanning ``[1e-6, 1e4] * p / K``."""
    return np.logspace(-6.0, 4.0, int(size)) * (p / K)


def default_delta(K, n):
    """Stopping threshold ``1e-6 * sqrt(K * n)`` on the coefficient change."""
    return 1e-6 * np.sqrt(K * n)


@dataclass(frozen=True)
class FasmConfig:
    """Tuning of :func:`fit_fasm`.

    ``factor_rule`` is ``"auto"`` (eigenvalue-ratio choice with `kmax` and
    `q`, re-selected every iteration), ``"fixed"`` (always `n_factors`) or
    ``"none"`` (no factor component).  ``alpha_grid`` and ``delta`` default
    to :func:`default_alpha_grid` and :func:`default_delta`.  ``sse`` picks
    the residual used inside mGCV.
    """

    alpha_grid: tuple | None = None
    delta: float | None = None
    max_iterations: int = 100
    factor_rule: str = "auto"
    n_factors: int | None = None
    kmax: int | None = None
    q: float = 0.5
    sse: str = "projected"

    def __post_init__(self):
        if self.alpha_grid is not None:
            grid = tuple(float(a) for a in np.ravel(self.alpha_grid))
            if not grid or any(not np.isfinite(a) or a < 0 for a in grid):
                raise ArgumentError("alpha_grid must be a nonempty set of nonnegative reals")
            object.__setattr__(self, "alpha_grid", grid)
        if self.delta is not None and not self.delta > 0:
            raise ArgumentError("delta must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ArgumentError("max_iterations must be a positive integer")
        if self.factor_rule not in FACTOR_RULES:
            raise ArgumentError(f"factor_rule must be one of {FACTOR_RULES}")
        if self.factor_rule == "fixed":
            if self.n_factors is None or int(self.n_factors) != self.n_factors or self.n_factors < 0:
                raise ArgumentError("factor_rule 'fixed' needs a nonnegative n_factors")
        if self.kmax is not None and (int(self.kmax) != self.kmax or self.kmax < 2):
            raise ArgumentError("kmax must be an integer >= 2")
        if not 0.0 < self.q < 1.0:
            raise ArgumentError("q must lie in (0, 1)")
        if self.sse not in SSE_KINDS:
            raise ArgumentError(f"sse must be one of {SSE_KINDS}")


@dataclass
class FasmFit:
    """Result of :func:`fit_fasm`.

    ``residuals`` equals ``Y - Phi @ C_hat - A_hat @ F_hat.T``.  ``df`` is the
    equivalent degrees of freedom at the final penalty weight and projector,
    and ``model_df = df + r``.
    """

    C_hat: np.ndarray
    A_hat: np.ndarray
    F_hat: np.ndarray
    residuals: np.ndarray
    alpha_trace: list
    r: int
    df: float
    model_df: float
    iterations: int
    converged: bool
    alpha: float
    mgcv: float
    mgcv_trace: list = field(default_factory=list)
    r_trace: list = field(default_factory=list)
    change_trace: list = field(default_factory=list)
    system: object = None
    grid: np.ndarray | None = None

    @property
    def fitted_values(self):
        """``Y`` minus the residuals: smooth part plus factor part."""
        Phi = evaluate_basis(self.system, self.grid)
        return Phi @ self.C_hat + self.A_hat @ self.F_hat.T


class AlphaSelection(NamedTuple):
    alpha: float
    C_hat: np.ndarray
    df: float
    score: float
    scores: np.ndarray


def _check_system(Phi, R, M, Y=None):
    Phi = np.asarray(Phi, dtype=float)
    R = np.asarray(R, dtype=float)
    M = np.asarray(M, dtype=float)
    if Phi.ndim != 2:
        raise DimensionError("Phi must be 2-d")
    p, K = Phi.shape
    if R.shape != (K, K):
        raise DimensionError(f"R has shape {R.shape}, expected {(K, K)}")
    if M.shape != (p, p):
        raise DimensionError(f"M has shape {M.shape}, expected {(p, p)}")
    if Y is not None:
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2 or Y.shape[0] != p:
            raise DimensionError(f"Y has shape {Y.shape}, expected ({p}, n)")
    return Phi, R, M, Y


def _solve_penalized(G, rhs, alpha):
    G = 0.5 * (G + G.T)
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > MAX_CONDITION:
        raise SingularityError(
            f"penalized system is singular at alpha={alpha!r}", alphas=[alpha]
        )
    try:
        factor = linalg.cho_factor(G, lower=True, check_finite=False)
        return linalg.cho_solve(factor, rhs, check_finite=False)
    except linalg.LinAlgError:
        return linalg.solve(G, rhs, assume_a="sym", check_finite=False)


def ridge_smooth(Y, Phi, R, alpha, M):
    """Coefficients solving ``(Phi^T M Phi + alpha R) C = Phi^T M Y``.

    Raises :class:`SingularityError` when the system matrix has condition
    number above 1e12.
    """
    Phi, R, M, Y = _check_system(Phi, R, M, Y)
    if alpha < 0:
        raise ArgumentError("alpha must be nonnegative")
    MPhi = M @ Phi
    G = Phi.T @ MPhi + alpha * R
    return _solve_penalized(G, MPhi.T @ Y, alpha)


def equivalent_df(Phi, R, alpha, M):
    """Trace of the smoother ``Phi (Phi^T M Phi + alpha R)^{-1} Phi^T M``.

    Evaluated as the trace of the K x K product
    ``(Phi^T M Phi + alpha R)^{-1} Phi^T M Phi``.
    """
    Phi, R, M, _ = _check_system(Phi, R, M)
    B = Phi.T @ M @ Phi
    return float(np.trace(_solve_penalized(B + alpha * R, B, alpha)))


def mgcv_score(Y, C_hat, Phi, M, df, sse="projected"):
    """Mean GCV ``(1/n) sum_i p * SSE_i / (p - df)^2``.

    ``SSE_i`` is the squared norm of ``M (Y_i - Phi c_i)`` (``sse="projected"``)
    or of the raw residual ``Y_i - Phi c_i`` (``sse="raw"``).
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    Phi = np.asarray(Phi, dtype=float)
    C_hat = np.asarray(C_hat, dtype=float).reshape(Phi.shape[1], -1)
    p = Y.shape[0]
    if Phi.shape[0] != p or C_hat.shape[1] != Y.shape[1]:
        raise DimensionError("Y, C_hat and Phi are not conformable")
    if df >= p:
        raise DegenerateTuningError(f"equivalent df {df:.6g} >= p = {p}")
    resid = Y - Phi @ C_hat
    if sse == "projected":
        resid = np.asarray(M, dtype=float) @ resid
    elif sse != "raw":
        raise ArgumentError(f"sse must be one of {SSE_KINDS}")
    per_subject = np.sum(resid**2, axis=0)
    return float(np.mean(p * per_subject / (p - df) ** 2))


def _spectral_scan(Y, Phi, R, M, alphas):
    """mGCV and df for every alpha from one simultaneous diagonalization.

    With ``B = Phi^T M Phi`` and ``T = B + s R`` positive definite (``s``
    balances the two traces), ``L^{-1} B L^{-T} = V diag(g) V^T`` for
    ``T = L L^T`` gives ``B + a R = L V diag(g + (a/s)(1 - g)) V^T L^T``.
    Scores then cost O(K) per alpha.  Residual sums of squares are split into
    the part outside ``span(M Phi)`` and a shrinkage part, avoiding
    cancellation.

    Returns ``(scores, dfs)`` with ``inf`` scores for singular or degenerate
    grid values, or ``None`` when ``T`` is not positive definite.
    """
    p, n = Y.shape
    MPhi = M @ Phi
    B = Phi.T @ MPhi
    B = 0.5 * (B + B.T)
    trace_R = np.trace(R)
    s = np.trace(B) / trace_R if trace_R > 0 else 1.0
    T = B + s * R
    try:
        L = np.linalg.cholesky(0.5 * (T + T.T))
    except np.linalg.LinAlgError:
        return None
    half = linalg.solve_triangular(L, B, lower=True)
    Bt = linalg.solve_triangular(L, half.T, lower=True)
    g, V = np.linalg.eigh(0.5 * (Bt + Bt.T))
    g = np.clip(g, 0.0, 1.0)
    W = linalg.solve_triangular(L.T, V, lower=False)
    Q = MPhi @ W  # orthogonal columns with squared norms g
    z = Q.T @ Y
    pos = g > 1e-10
    fitted = Q[:, pos] @ (z[pos] / g[pos, None])
    outside = np.sum((M @ Y - fitted) ** 2)
    weight = np.sum(z[pos] ** 2, axis=1) / g[pos]

    a = np.asarray(alphas, dtype=float)[:, None] / s
    denom = g + a * (1.0 - g)
    ok = denom.min(axis=1) > MAX_CONDITION**-1 * denom.max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        dfs = np.sum(g / denom, axis=1)
        shrink = (a * (1.0 - g) / denom)[:, pos]
        sse_total = outside + shrink**2 @ weight
        scores = p * sse_total / (n * (p - dfs) ** 2)
    scores = np.where(ok & (dfs < p), scores, np.inf)
    return scores, np.where(ok, dfs, np.nan)


def select_alpha(Y, Phi, R, M, alpha_grid, sse="projected"):
    """Penalty weight minimizing the mGCV score over `alpha_grid`.

    Ties go to the smallest alpha.  Grid values whose system is singular or
    whose df reaches ``p`` are skipped; if none remain the corresponding
    error is raised.
    """
    Phi, R, M, Y = _check_system(Phi, R, M, Y)
    alphas = np.asarray(alpha_grid, dtype=float).ravel()
    if alphas.size == 0:
        raise ArgumentError("alpha grid is empty")
    if np.any(alphas < 0) or not np.all(np.isfinite(alphas)):
        raise ArgumentError("alpha grid must hold finite nonnegative values")

    fast = _spectral_scan(Y, Phi, R, M, alphas) if sse == "projected" else None
    singular = []
    if fast is not None:
        scores, dfs = fast
        singular = [float(a) for a in alphas[np.isnan(dfs)]]
    else:
        scores = np.full(alphas.size, np.inf)
        dfs = np.full(alphas.size, np.nan)
        for i, a in enumerate(alphas):
            try:
                C = ridge_smooth(Y, Phi, R, a, M)
                dfs[i] = equivalent_df(Phi, R, a, M)
                scores[i] = mgcv_score(Y, C, Phi, M, dfs[i], sse=sse)
            except SingularityError:
                singular.append(float(a))
            except DegenerateTuningError:
                pass

    # Smallest score first, smallest alpha among equal scores.
    for idx in np.lexsort((alphas, scores)):
        if not np.isfinite(scores[idx]):
            break
        alpha = float(alphas[idx])
        try:
            C = ridge_smooth(Y, Phi, R, alpha, M)
        except SingularityError:
            singular.append(alpha)
            continue
        return AlphaSelection(alpha, C, float(dfs[idx]), float(scores[idx]), scores)
    if singular:
        raise SingularityError(
            "penalized system singular for every usable alpha in the grid: "
            + ", ".join(f"{a:.6g}" for a in sorted(set(singular))),
            alphas=sorted(set(singular)),
        )
    raise DegenerateTuningError("equivalent df >= p for every alpha in the grid")


def estimate_factors(Y, Phi, C_hat, A_hat):
    """Factor scores ``F`` (n x r) with ``F^T = A^T (Y - Phi C) / p``."""
    Y = np.asarray(Y, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    C_hat = np.asarray(C_hat, dtype=float)
    A_hat = np.asarray(A_hat, dtype=float)
    p, n = Y.shape
    if Phi.shape[0] != p or Phi.shape[1] != C_hat.shape[0] or C_hat.shape[1] != n:
        raise DimensionError("Y, Phi and C_hat are not conformable")
    if A_hat.ndim != 2 or A_hat.shape[0] != p:
        raise DimensionError(f"loadings must have {p} rows")
    return ((A_hat.T @ (Y - Phi @ C_hat)) / p).T


def fitted_curves(C_hat, system, eval_grid):
    """Curves ``Phi(u)^T c_i`` evaluated on `eval_grid` (one column per subject)."""
    grid = as_grid(eval_grid, system.domain)
    C_hat = np.asarray(C_hat, dtype=float)
    if C_hat.ndim != 2 or C_hat.shape[0] != system.n_basis:
        raise DimensionError(f"C_hat must have {system.n_basis} rows")
    return evaluate_basis(system, grid) @ C_hat


def model_df(fit):
    """Equivalent df of the final smoother plus the number of retained factors."""
    return float(fit.df + fit.r)


def penalized_projected_ssr(Y, Phi, R, C, alpha, M):
    """Projected penalized objective ``sum_i |M(Y_i - Phi c_i)|^2 + alpha c_i^T R c_i``
    divided by ``n p``."""
    p, n = np.shape(Y)
    resid = M @ (Y - Phi @ C)
    return float((np.sum(resid**2) + alpha * np.sum(C * (R @ C))) / (n * p))


def _validate_data(Y, p):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DimensionError("Y must be a p x n matrix")
    if Y.shape[0] != p:
        raise DimensionError(f"Y has {Y.shape[0]} rows but the grid has {p} points")
    if Y.shape[1] < 2:
        raise ArgumentError("at least two curves are required")
    if not np.all(np.isfinite(Y)):
        raise NonFiniteDataError("Y contains NaN or infinite values")
    return Y


def fit_fasm(Y, system, grid, config=None):
    """Fit the factor-augmented smoothing model to the p x n data matrix `Y`.

    Starts from zero loadings (a plain penalized smooth), then alternates
    loading extraction and coefficient re-estimation until the Frobenius
    change of the coefficient matrix falls below ``config.delta`` or
    ``config.max_iterations`` coefficient solves have been made.
    Non-convergence is reported through ``FasmFit.converged``.
    """
    config = FasmConfig() if config is None else config
    grid = as_grid(grid, system.domain)
    p = grid.size
    Y = _validate_data(Y, p)
    n = Y.shape[1]
    K = system.n_basis
    if K > p:
        warnings.warn(
            f"{K} basis functions for {p} grid points; relying on the penalty",
            RuntimeWarning,
            stacklevel=2,
        )
    Phi = evaluate_basis(system, grid)
    R = penalty_matrix(system)
    alphas = (
        default_alpha_grid(p, K) if config.alpha_grid is None else np.array(config.alpha_grid)
    )
    delta = default_delta(K, n) if config.delta is None else config.delta
    kmax = default_kmax(n, p) if config.kmax is None else config.kmax

    A = np.zeros((p, 0))
    M = np.eye(p)
    sel = select_alpha(Y, Phi, R, M, alphas, sse=config.sse)
    C = sel.C_hat
    alpha_trace, mgcv_trace, r_trace, change_trace = [sel.alpha], [sel.score], [0], []
    iterations = 1
    converged = config.factor_rule == "none"

    while not converged and iterations < config.max_iterations:
        S = residual_second_moment(Y, Phi, C)
        if config.factor_rule == "fixed":
            r = int(config.n_factors)
            if r > p:
                raise ArgumentError(f"n_factors={r} exceeds p={p}")
            A, _ = principal_loadings(S, r)
        else:
            A, spectrum = principal_loadings(S, 0)
            r = auto_num_factors(spectrum.values, kmax, config.q)
            A = np.sqrt(p) * spectrum.vectors[:, :r]
        M = projection_complement(A)
        sel = select_alpha(Y, Phi, R, M, alphas, sse=config.sse)
        change = float(np.linalg.norm(sel.C_hat - C))
        C = sel.C_hat
        iterations += 1
        alpha_trace.append(sel.alpha)
        mgcv_trace.append(sel.score)
        r_trace.append(r)
        change_trace.append(change)
        converged = change < delta

    F = estimate_factors(Y, Phi, C, A)
    residuals = Y - Phi @ C - A @ F.T
    r = A.shape[1]
    return FasmFit(
        C_hat=C,
        A_hat=A,
        F_hat=F,
        residuals=residuals,
        alpha_trace=alpha_trace,
        r=r,
        df=sel.df,
        model_df=sel.df + r,
        iterations=iterations,
        converged=converged,
        alpha=sel.alpha,
        mgcv=sel.score,
        mgcv_trace=mgcv_trace,
        r_trace=r_trace,
        change_trace=change_trace,
        system=system,
        grid=grid,
    )


def fit_bsmooth(Y, system, grid, config=None):
    """Penalized basis smoother: :func:`fit_fasm` with the factor part off."""
    config = FasmConfig() if config is None else config
    fields = {k: getattr(config, k) for k in config.__dataclass_fields__}
    fields.update(factor_rule="none", n_factors=None)
    return fit_fasm(Y, system, grid, FasmConfig(**fields))
