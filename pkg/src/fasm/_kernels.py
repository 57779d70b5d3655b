"""Low-level numerical kernels.

``bspline_design`` evaluates B-spline derivatives with the de Boor / Cox
recurrence (the triangular ``ndu`` table of Piegl and Tiller, algorithm A2.3),
vectorized over evaluation points.
"""

import numpy as np


def find_spans(knots, order, x):
    """Index ``i`` of the knot span ``[t_i, t_{i+1})`` holding each point.

    The right endpoint is assigned to the last nonempty span.
    """
    n_basis = knots.size - order
    span = np.searchsorted(knots, x, side="right") - 1
    return np.clip(span, order - 1, n_basis - 1)


def bspline_nonzero_derivs(knots, order, x, nders):
    """Derivatives 0..nders of the `order` B-splines nonzero at each point.

    Returns ``(ders, span)`` where ``ders`` has shape ``(nders + 1, len(x),
    order)`` and column ``j`` of ``ders[k]`` is the k-th derivative of basis
    function ``span - order + 1 + j``.
    """
    deg = order - 1
    npts = x.size
    span = find_spans(knots, order, x)
    ndu = np.zeros((order, order, npts))
    ndu[0, 0] = 1.0
    left = np.zeros((order, npts))
    right = np.zeros((order, npts))
    for j in range(1, order):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nders + 1, npts, order))
    ders[0] = ndu[:, deg].T
    top = min(nders, deg)
    if top == 0:
        return ders, span

    a = np.zeros((2, order, npts))
    for r in range(order):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[0, 0] = 1.0
        for k in range(1, top + 1):
            d = np.zeros(npts)
            rk = r - k
            pk = deg - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d += a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else deg - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, :, r] = d
            s1, s2 = s2, s1

    factor = float(deg)
    for k in range(1, top + 1):
        ders[k] *= factor
        factor *= deg - k
    return ders, span


def bspline_design(knots, order, x, deriv=0):
    """Dense ``len(x) x n_basis`` matrix of ``deriv``-th B-spline derivatives."""
    knots = np.asarray(knots, dtype=float)
    x = np.asarray(x, dtype=float)
    n_basis = knots.size - order
    out = np.zeros((x.size, n_basis))
    if deriv >= order or x.size == 0:
        return out
    ders, span = bspline_nonzero_derivs(knots, order, x, deriv)
    cols = span[:, None] - order + 1 + np.arange(order)[None, :]
    rows = np.repeat(np.arange(x.size)[:, None], order, axis=1)
    out[rows, cols] = ders[deriv]
    return out
