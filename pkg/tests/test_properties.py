import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fasm.basis import Interval, build_bspline_system, evaluate_basis, greville_abscissae, penalty_matrix
from fasm.covariance import coefficient_covariance
from fasm.csvio import load_matrix_csv, write_matrix_csv
from fasm.estimator import ridge_smooth
from fasm.factor import principal_loadings, projection_complement, select_num_factors
from fasm.simulation import mise

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False)
seeds = st.integers(0, 2**32 - 1)


@st.composite
def bspline_systems(draw):
    lo = draw(st.floats(-5, 5))
    width = draw(st.floats(0.1, 10))
    order = draw(st.integers(1, 6))
    fractions = draw(st.lists(st.floats(0.01, 0.99), max_size=12))
    knots = sorted(lo + width * f for f in fractions)
    knots = [k for k in knots if lo < k < lo + width]
    # keep multiplicities legal
    _, counts = np.unique(knots, return_counts=True) if knots else (None, np.array([0]))
    assume(counts.max() <= order)
    return build_bspline_system(Interval(lo, lo + width), knots, order)


@given(bspline_systems(), seeds)
def test_partition_of_unity(system, seed):
    d = system.domain
    x = np.sort(np.random.default_rng(seed).uniform(d.lower, d.upper, 50))
    x = np.concatenate([[d.lower], x, [d.upper]])
    Phi = evaluate_basis(system, x)
    assert np.max(np.abs(Phi.sum(axis=1) - 1.0)) < 1e-12
    assert np.max(np.count_nonzero(Phi, axis=1)) <= system.order
    assert Phi.min() >= -1e-14


@given(bspline_systems())
def test_penalty_symmetric_psd(system):
    R = penalty_matrix(system)
    scale = max(np.max(np.abs(R)), 1e-300)
    assert np.max(np.abs(R - R.T)) <= 1e-12 * scale
    eig = np.linalg.eigvalsh(R)
    assert eig.min() >= -1e-10 * max(eig.max(), 0.0) - 1e-300


@given(bspline_systems())
def test_penalty_ignores_linear_functions(system):
    assume(system.order >= 2)
    R = penalty_matrix(system)
    norm = np.linalg.norm(R)
    for c in (np.ones(system.n_basis), greville_abscissae(system)):
        assert abs(c @ R @ c) <= 1e-10 * max(norm, 1.0) * (1 + c @ c)


@given(st.integers(2, 30), st.integers(0, 6), seeds)
def test_loadings_and_projector(p, r, seed):
    r = min(r, p)
    X = np.random.default_rng(seed).standard_normal((p, p + 3))
    S = X @ X.T / (p + 3)
    A, spectrum = principal_loadings(S, r)
    assert np.all(np.abs(A.T @ A / p - np.eye(r)) < 1e-10)
    V = np.diag(spectrum.values[:r])
    assert np.linalg.norm(S @ A - A @ V) < 1e-8 * (1 + np.linalg.norm(S))
    assert np.all(np.diff(spectrum.values) <= 0)
    M = projection_complement(A)
    assert np.linalg.norm(M @ M - M) < 1e-10 * p
    assert np.all(np.abs(M @ A) < 1e-10 * np.sqrt(p))
    assert np.array_equal(M, M.T)


@given(
    st.lists(st.floats(1e-3, 1e3), min_size=4, max_size=12).map(lambda v: sorted(v, reverse=True)),
    st.floats(1e-6, 1e6),
)
def test_factor_count_scale_invariant(values, c):
    kmax = len(values) - 1
    base = select_num_factors(values, kmax)
    scaled = select_num_factors([c * v for v in values], kmax)
    assert base == scaled


@given(st.floats(0.05, 0.95), st.floats(1e-3, 1e3), st.integers(3, 10))
def test_geometric_spectrum_has_no_factors(rho, c, length):
    values = c * rho ** np.arange(1, length + 1)
    assert select_num_factors(values, length - 1) == 0


@given(st.integers(3, 25), st.integers(1, 6), st.floats(0, 10), seeds)
def test_normal_equation_residual(p, n, alpha, seed):
    rng = np.random.default_rng(seed)
    system = build_bspline_system(Interval(), np.linspace(0, 1, 6)[1:-1], 4)
    grid = np.linspace(0, 1, p + 6)
    Phi = evaluate_basis(system, grid)
    R = penalty_matrix(system)
    Y = rng.standard_normal((grid.size, n))
    A = np.sqrt(grid.size) * np.linalg.qr(rng.standard_normal((grid.size, 1)))[0]
    M = projection_complement(A)
    C = ridge_smooth(Y, Phi, R, alpha, M)
    rhs = Phi.T @ M @ Y
    assert np.linalg.norm((Phi.T @ M @ Phi + alpha * R) @ C - rhs) < 1e-8 * (1 + np.linalg.norm(rhs))


@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(2, 8)), elements=finite))
def test_coefficient_covariance_is_centred_covariance(C):
    D = C - C.mean(axis=1, keepdims=True)
    expected = D @ D.T / (C.shape[1] - 1)
    scale = 1.0 + np.max(np.abs(C)) ** 2
    assert np.max(np.abs(coefficient_covariance(C) - expected)) <= 1e-12 * scale * C.shape[1]


@given(arrays(float, st.tuples(st.integers(1, 7), st.integers(1, 5)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_csv_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "m.csv"
    grid = np.arange(values.shape[0], dtype=float)
    write_matrix_csv(path, values, grid=grid)
    back = load_matrix_csv(path)
    assert np.array_equal(back.values, values)
    assert np.array_equal(back.grid, grid)


@given(arrays(float, st.tuples(st.integers(2, 9), st.integers(1, 4)), elements=finite), seeds)
def test_mise_symmetric_nonnegative(X, seed):
    Z = X + np.random.default_rng(seed).standard_normal(X.shape)
    g = np.linspace(0, 1, X.shape[0])
    assert mise(X, X, g) == 0.0
    assert mise(X, Z, g) == mise(Z, X, g) >= 0.0
