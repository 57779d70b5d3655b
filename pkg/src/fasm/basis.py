"""Basis systems, basis matrices and the second-derivative roughness penalty.

Three families are provided:

* clamped B-splines of arbitrary order,
* Fourier systems (constant plus sine/cosine pairs),
* piecewise-frequency Fourier systems whose frequencies change at a
  changepoint, with each segment evaluated independently.

Every system is an immutable value object.  Basis matrices are laid out with
one row per evaluation point and one column per basis function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DomainError

__all__ = [
    "Interval",
    "BasisSystem",
    "BSplineSystem",
    "FourierSystem",
    "PiecewiseFourierSystem",
    "as_grid",
    "equispaced_grid",
    "build_bspline_system",
    "build_fourier_system",
    "build_piecewise_fourier_system",
    "evaluate_basis",
    "evaluate_second_derivative",
    "penalty_matrix",
    "greville_abscissae",
]

# Relative slack when checking that points sit inside the domain.
_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lower, upper]`` with ``lower < upper``."""

    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise ArgumentError(f"invalid interval [{self.lower}, {self.upper}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def length(self):
        return self.upper - self.lower

    def contains(self, points):
        points = np.asarray(points, dtype=float)
        tol = _DOMAIN_SLACK * max(1.0, abs(self.lower), abs(self.upper))
        return (points >= self.lower - tol) & (points <= self.upper + tol)


def as_grid(points, domain=None):
    """Validate observation sites and return them as a float array.

    The grid must hold at least two strictly increasing finite points, all
    inside `domain` when one is given.
    """
    grid = np.asarray(points, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ArgumentError("a grid needs at least two points in a 1-d sequence")
    if not np.all(np.isfinite(grid)):
        raise ArgumentError("grid points must be finite")
    if np.any(np.diff(grid) <= 0):
        raise ArgumentError("grid points must be strictly increasing")
    if domain is not None and not np.all(domain.contains(grid)):
        bad = grid[~domain.contains(grid)][0]
        raise DomainError(
            f"grid point {bad!r} outside domain [{domain.lower}, {domain.upper}]"
        )
    return grid


def equispaced_grid(p, domain=Interval()):
    """``p`` equispaced points on `domain`, endpoints included."""
    if int(p) < 2:
        raise ArgumentError("p must be at least 2")
    return np.linspace(domain.lower, domain.upper, int(p))


class BasisSystem:
    """Common interface of every basis family.

    Subclasses provide ``domain``, ``n_basis``, :meth:`_evaluate` and
    :meth:`_quadrature_segments`.
    """

    domain: Interval

    @property
    def n_basis(self):
        raise NotImplementedError

    def evaluate(self, points, deriv=0):
        """Return the ``len(points) x n_basis`` matrix of ``deriv``-th derivatives."""
        if deriv < 0:
            raise ArgumentError("derivative order must be nonnegative")
        x = np.atleast_1d(np.asarray(points, dtype=float))
        if x.ndim != 1:
            raise ArgumentError("points must be a 1-d sequence")
        inside = self.domain.contains(x)
        if not np.all(inside):
            raise DomainError(
                f"point {x[~inside][0]!r} outside domain "
                f"[{self.domain.lower}, {self.domain.upper}]"
            )
        x = np.clip(x, self.domain.lower, self.domain.upper)
        return self._evaluate(x, int(deriv))

    def _evaluate(self, x, deriv):
        raise NotImplementedError

    def _quadrature_segments(self):
        """Yield ``(lo, hi, n_nodes)`` covering the domain.

        The node count must make Gauss-Legendre exact (or accurate to
        rounding) for products of second derivatives on that segment.
        """
        raise NotImplementedError


# ---------------------------------------------------------------------------
# B-splines


@dataclass(frozen=True)
class BSplineSystem(BasisSystem):
    """Clamped B-spline system of a given order (degree ``order - 1``)."""

    domain: Interval
    interior_knots: tuple
    order: int

    @property
    def n_basis(self):
        return len(self.interior_knots) + self.order

    @property
    def knots(self):
        m = self.order
        return np.concatenate(
            [
                np.full(m, self.domain.lower),
                np.asarray(self.interior_knots, dtype=float),
                np.full(m, self.domain.upper),
            ]
        )

    def _evaluate(self, x, deriv):
        from ._kernels import bspline_design

        return bspline_design(self.knots, self.order, x, deriv)

    def _quadrature_segments(self):
        # Second derivatives are piecewise polynomials of degree order-3, so the
        # integrand has degree 2*(order-3) and order-2 nodes per span suffice.
        nodes = max(self.order - 2, 1)
        breaks = np.unique(self.knots)
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            yield lo, hi, nodes


def build_bspline_system(domain, interior_knots=(), order=4):
    """Clamped B-spline system with ``len(interior_knots) + order`` functions.

    Boundary knots are repeated `order` times.  Interior knots must be
    nondecreasing and lie strictly inside the domain.

    >>> build_bspline_system(Interval(0, 1), [0.5], 4).n_basis
    5
    """
    if int(order) != order or order < 1:
        raise ArgumentError(f"B-spline order must be a positive integer, got {order!r}")
    order = int(order)
    knots = np.asarray(interior_knots, dtype=float).ravel()
    if knots.size and not np.all(np.isfinite(knots)):
        raise ArgumentError("interior knots must be finite")
    if knots.size and np.any(np.diff(knots) < 0):
        raise ArgumentError("interior knots must be nondecreasing")
    outside = (knots <= domain.lower) | (knots >= domain.upper)
    if np.any(outside):
        raise DomainError(
            f"interior knot {knots[outside][0]!r} not strictly inside "
            f"[{domain.lower}, {domain.upper}]"
        )
    if knots.size:
        _, counts = np.unique(knots, return_counts=True)
        if counts.max() > order:
            raise ArgumentError("interior knot multiplicity exceeds the order")
    return BSplineSystem(domain, tuple(float(k) for k in knots), order)


def greville_abscissae(system):
    """Knot averages locating the centre of mass of each B-spline."""
    t = system.knots
    m = system.order
    if m == 1:
        return 0.5 * (t[:-1] + t[1:])
    return np.array(
        [t[k + 1 : k + m].mean() for k in range(system.n_basis)], dtype=float
    )


# ---------------------------------------------------------------------------
# Fourier systems


def _fourier_columns(x, origin, period, n_pairs, constant, amplitude, multiplier, deriv):
    """Fourier columns ``[const, sin w1, cos w1, sin w2, cos w2, ...]``."""
    out = np.zeros((x.size, 1 + 2 * n_pairs))
    if deriv == 0:
        out[:, 0] = constant
    theta = 2.0 * np.pi * (x - origin) / period
    shift = deriv * np.pi / 2.0
    for k in range(1, n_pairs + 1):
        freq = k * multiplier
        omega = 2.0 * np.pi * freq / period
        scale = amplitude * omega**deriv
        out[:, 2 * k - 1] = scale * np.sin(freq * theta + shift)
        out[:, 2 * k] = scale * np.cos(freq * theta + shift)
    return out


def _fourier_nodes(lo, hi, period, max_harmonic):
    # Products of two columns oscillate at most 2*max_harmonic times per period.
    # 4*H + 16 Gauss-Legendre nodes per period reaches rounding-level accuracy.
    per_period = 4 * max_harmonic + 16
    pieces = max(1, math.ceil((hi - lo) / period - 1e-12))
    return pieces, per_period


@dataclass(frozen=True)
class FourierSystem(BasisSystem):
    """Constant plus `n_pairs` sine/cosine pairs with the given `period`.

    With the default scaling the system is orthonormal on the domain when the
    period equals the domain length: the constant is ``1/sqrt(L)`` and each
    trigonometric term carries ``sqrt(2/L)``.
    """

    domain: Interval
    n_pairs: int
    period: float
    constant: float
    amplitude: float

    @property
    def n_basis(self):
        return 1 + 2 * self.n_pairs

    def _evaluate(self, x, deriv):
        return _fourier_columns(
            x, self.domain.lower, self.period, self.n_pairs,
            self.constant, self.amplitude, 1.0, deriv,
        )

    def _quadrature_segments(self):
        lo, hi = self.domain.lower, self.domain.upper
        pieces, nodes = _fourier_nodes(lo, hi, self.period, self.n_pairs)
        edges = np.linspace(lo, hi, pieces + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            yield a, b, nodes


def _fourier_scaling(domain, constant, amplitude):
    length = domain.length
    if constant is None:
        constant = 1.0 / math.sqrt(length)
    if amplitude is None:
        amplitude = math.sqrt(2.0 / length)
    return float(constant), float(amplitude)


def build_fourier_system(domain, n_pairs, period=None, constant=None, amplitude=None):
    """Fourier system with ``1 + 2 * n_pairs`` functions.

    `constant` and `amplitude` default to the orthonormal scaling; pass
    explicit values (e.g. ``constant=1, amplitude=2``) for literal
    generator amplitudes.
    """
    if int(n_pairs) != n_pairs or n_pairs < 0:
        raise ArgumentError("n_pairs must be a nonnegative integer")
    period = domain.length if period is None else float(period)
    if not period > 0:
        raise ArgumentError("period must be positive")
    constant, amplitude = _fourier_scaling(domain, constant, amplitude)
    return FourierSystem(domain, int(n_pairs), period, constant, amplitude)


@dataclass(frozen=True)
class PiecewiseFourierSystem(BasisSystem):
    """Fourier system whose frequencies are multiplied by `pre` up to the
    changepoint and by `post` after it.

    The two pieces are evaluated independently; no continuity is imposed at
    the changepoint.  Points equal to the changepoint belong to the first
    piece.
    """

    base: FourierSystem
    changepoint: float
    pre: float
    post: float

    @property
    def domain(self):
        return self.base.domain

    @property
    def n_basis(self):
        return self.base.n_basis

    def _evaluate(self, x, deriv):
        b = self.base
        out = np.empty((x.size, b.n_basis))
        first = x <= self.changepoint
        for mask, mult in ((first, self.pre), (~first, self.post)):
            if np.any(mask):
                out[mask] = _fourier_columns(
                    x[mask], b.domain.lower, b.period, b.n_pairs,
                    b.constant, b.amplitude, mult, deriv,
                )
        return out

    def _segment_values(self, x, deriv, multiplier):
        b = self.base
        return _fourier_columns(
            x, b.domain.lower, b.period, b.n_pairs, b.constant, b.amplitude,
            multiplier, deriv,
        )

    def _quadrature_segments(self):
        raise NotImplementedError  # handled piecewise in penalty_matrix


def build_piecewise_fourier_system(
    domain, n_pairs, changepoint, pre=1.0, post=2.0, period=None,
    constant=None, amplitude=None,
):
    """Piecewise-frequency Fourier system (frequency multipliers `pre`/`post`)."""
    if not domain.lower < changepoint < domain.upper:
        raise DomainError(f"changepoint {changepoint!r} not strictly inside the domain")
    if not (pre > 0 and post > 0):
        raise ArgumentError("frequency multipliers must be positive")
    base = build_fourier_system(domain, n_pairs, period, constant, amplitude)
    return PiecewiseFourierSystem(base, float(changepoint), float(pre), float(post))


# ---------------------------------------------------------------------------
# Matrices


def evaluate_basis(system, grid):
    """Basis matrix ``Phi[j, k] = phi_k(grid[j])``."""
    return system.evaluate(grid, 0)


def evaluate_second_derivative(system, grid):
    """Matrix of second derivatives ``phi_k''(grid[j])``.

    B-splines of order below 3 are piecewise linear; their second derivative
    is returned as an all-zero matrix.
    """
    return system.evaluate(grid, 2)


def _gauss_legendre_gram(segments, values):
    """Accumulate ``sum w * D(x)^T D(x)`` over Gauss-Legendre rules."""
    total = None
    for lo, hi, nodes in segments:
        xg, wg = np.polynomial.legendre.leggauss(nodes)
        half = 0.5 * (hi - lo)
        x = lo + half * (xg + 1.0)
        d2 = values(x)
        block = (d2 * (half * wg)[:, None]).T @ d2
        total = block if total is None else total + block
    return total


def penalty_matrix(system):
    """Roughness penalty ``R = int phi''(s) phi''(s)^T ds`` over the domain.

    Integrated exactly (to rounding) by Gauss-Legendre quadrature on each knot
    span or Fourier segment.  The result is symmetrized.
    """
    K = system.n_basis
    if isinstance(system, BSplineSystem) and system.order < 3:
        return np.zeros((K, K))
    if isinstance(system, PiecewiseFourierSystem):
        b = system.base
        lo, cp, hi = b.domain.lower, system.changepoint, b.domain.upper
        R = np.zeros((K, K))
        for a, c, mult in ((lo, cp, system.pre), (cp, hi, system.post)):
            pieces, nodes = _fourier_nodes(a, c, b.period, b.n_pairs * mult)
            edges = np.linspace(a, c, pieces + 1)
            segs = [(e0, e1, int(math.ceil(nodes))) for e0, e1 in zip(edges[:-1], edges[1:])]
            R += _gauss_legendre_gram(
                segs, lambda x, m=mult: system._segment_values(x, 2, m)
            )
    else:
        R = _gauss_legendre_gram(
            system._quadrature_segments(), lambda x: system._evaluate(x, 2)
        )
    return 0.5 * (R + R.T)
