"""Seeded data-generating scenarios, error metrics and Monte-Carlo drivers.

Scenarios
---------
``setting1``
    13 cubic B-splines, ``c ~ N(0, 1.5^2)``, loadings ``N(0, 0.6^2)``,
    four factors ``N(0, sigma^2 I)``, noise ``N(0, 0.5^2)``.
``setting2``
    5 cubic B-splines with coefficient scales 3, 2.5, 2, 1.5, 1 and loadings
    ``N(0, 0.8^2)``; otherwise as ``setting1``.
``setting3``
    ``setting1`` with 21 cubic B-splines.
``spline_setting``
    9 Fourier functions (amplitude 2), factors ``N(0, 0.5^2)``, loadings
    ``N(0, sigma^2 I)``; fitted with a cubic smoothing spline with knots at
    every grid point.
``changing_basis``
    7 Fourier functions whose frequencies double on ``(0.5, 1]``;
    coefficients and noise ``N(0, 0.5^2)``; fitted with the first-half basis.
``step_jump``
    7 cubic B-spline curves plus a common mean: a random combination of 25
    cubic B-splines plus a step of height ``delta`` at ``u = 0.5``; fitted
    with the 25-function basis.

All randomness comes from Philox streams keyed by the scenario seed and a
hash of ``(kind, n, p)``.  Every model component has its own stream, so
scenarios that differ only in ``sigma`` or ``delta`` share their draws.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .basis import (
    BasisSystem,
    Interval,
    build_bspline_system,
    build_fourier_system,
    build_piecewise_fourier_system,
    equispaced_grid,
    evaluate_basis,
)
from .covariance import frobenius_mse, model_covariance, sample_covariance
from .errors import ArgumentError, DimensionError
from .estimator import FasmConfig, fit_fasm
from .factor import residual_second_moment

__all__ = [
    "SCENARIO_KINDS",
    "SimulationScenario",
    "GeneratedData",
    "generate",
    "mise",
    "rmse_fit",
    "residual_spectrum",
    "run_residual_spectrum",
    "spiked_spectrum",
    "derive_seed",
    "CellSummary",
    "ExperimentResult",
    "run_mise_experiment",
    "run_cov_experiment",
    "run_step_jump_experiment",
    "DEFAULT_DESIGNS",
    "DEFAULT_SIGMAS",
]

SCENARIO_KINDS = (
    "setting1", "setting2", "setting3", "spline_setting", "changing_basis", "step_jump",
)

DEFAULT_DESIGNS = {
    "setting1": [(20, 51), (20, 101), (50, 51), (100, 101)],
    "setting2": [(20, 51), (20, 101), (50, 51), (100, 101)],
    "setting3": [(50, 40)],
    "spline_setting": [(20, 51), (20, 101), (50, 51), (100, 101)],
    "changing_basis": [(100, 101)],
    "step_jump": [(100, 101)],
}
DEFAULT_SIGMAS = (0.0, 0.5, 0.75, 1.0)

_UNIT = Interval(0.0, 1.0)
_N_FACTORS = 4
_NOISE_SD = 0.5


@dataclass(frozen=True)
class SimulationScenario:
    """A seeded data-generating configuration.

    ``sigma`` scales the factor component (``setting*``, ``spline_setting``);
    ``delta`` is the mean shift of ``step_jump``; ``noise_sd`` overrides the
    idiosyncratic noise level.
    """

    kind: str
    n: int
    p: int
    sigma: float = 0.0
    seed: int = 0
    delta: float = 2.0
    noise_sd: float | None = None
    n_factors: int = _N_FACTORS

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ArgumentError(f"unknown scenario kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 2 or int(self.p) != self.p or self.p < 2:
            raise ArgumentError("n and p must be integers >= 2")
        if not self.sigma >= 0:
            raise ArgumentError("sigma must be nonnegative")
        if self.noise_sd is not None and not self.noise_sd >= 0:
            raise ArgumentError("noise_sd must be nonnegative")
        if not 0 <= int(self.seed) < 2**64:
            raise ArgumentError("seed must be a 64-bit unsigned integer")


@dataclass
class GeneratedData:
    """Simulated observations with their ground truth.

    ``Y = true_curves + true_A @ true_F.T + noise``.
    """

    Y: np.ndarray
    true_curves: np.ndarray
    true_C: np.ndarray
    true_A: np.ndarray
    true_F: np.ndarray
    population_covariance: np.ndarray
    grid: np.ndarray
    generating_system: BasisSystem
    fitting_system: BasisSystem
    noise: np.ndarray = field(repr=False, default=None)
    mean_function: np.ndarray | None = None


def _scenario_key(kind, n, p):
    digest = hashlib.sha256(f"{kind}|{n}|{p}".encode()).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in (0, 4))


def _streams(scenario, count=5):
    seq = np.random.SeedSequence(
        entropy=int(scenario.seed),
        spawn_key=_scenario_key(scenario.kind, scenario.n, scenario.p),
    )
    return [np.random.Generator(np.random.Philox(child)) for child in seq.spawn(count)]


def _equispaced_bspline(n_basis, order=4):
    interior = np.linspace(0.0, 1.0, n_basis - order + 2)[1:-1]
    return build_bspline_system(_UNIT, interior, order)


def _smoothing_spline(grid):
    return build_bspline_system(_UNIT, grid[1:-1], 4)


def generate(scenario):
    """Draw one data set for `scenario` on an equispaced grid over [0, 1]."""
    kind, n, p = scenario.kind, int(scenario.n), int(scenario.p)
    g_curve, g_load, g_fac, g_noise, g_mean = _streams(scenario)
    grid = equispaced_grid(p, _UNIT)
    noise_sd = _NOISE_SD if scenario.noise_sd is None else scenario.noise_sd
    r = int(scenario.n_factors)
    sigma = float(scenario.sigma)
    mean_function = None

    if kind in ("setting1", "setting2", "setting3"):
        K = {"setting1": 13, "setting2": 5, "setting3": 21}[kind]
        system = _equispaced_bspline(K)
        fit_system = system
        if kind == "setting2":
            scales = np.array([3.0, 2.5, 2.0, 1.5, 1.0])
            load_sd = 0.8
        else:
            scales = np.full(K, 1.5)
            load_sd = 0.6
        C = scales[:, None] * g_curve.standard_normal((K, n))
        A = load_sd * g_load.standard_normal((p, r))
        F = sigma * g_fac.standard_normal((n, r))
        coef_var = np.diag(scales**2)
        factor_var = sigma**2 * np.eye(r)
    elif kind == "spline_setting":
        system = build_fourier_system(_UNIT, 4, period=1.0, constant=1.0, amplitude=2.0)
        fit_system = _smoothing_spline(grid)
        K = system.n_basis
        C = 1.5 * g_curve.standard_normal((K, n))
        A = sigma * g_load.standard_normal((p, r))
        F = 0.5 * g_fac.standard_normal((n, r))
        coef_var = 1.5**2 * np.eye(K)
        factor_var = 0.5**2 * np.eye(r)
    elif kind == "changing_basis":
        system = build_piecewise_fourier_system(
            _UNIT, 3, changepoint=0.5, pre=1.0, post=2.0, period=1.0,
            constant=1.0, amplitude=2.0,
        )
        fit_system = system.base
        K = system.n_basis
        C = 0.5 * g_curve.standard_normal((K, n))
        A = np.zeros((p, 0))
        F = np.zeros((n, 0))
        coef_var = 0.5**2 * np.eye(K)
        factor_var = np.zeros((0, 0))
    else:  # step_jump
        system = _equispaced_bspline(7)
        fit_system = _equispaced_bspline(25)
        K = system.n_basis
        C = 1.5 * g_curve.standard_normal((K, n))
        A = np.zeros((p, 0))
        F = np.zeros((n, 0))
        coef_var = 1.5**2 * np.eye(K)
        factor_var = np.zeros((0, 0))
        mean_coef = g_mean.standard_normal(fit_system.n_basis)
        mean_function = evaluate_basis(fit_system, grid) @ mean_coef
        mean_function = mean_function + scenario.delta * (grid > 0.5)

    Phi = evaluate_basis(system, grid)
    E = noise_sd * g_noise.standard_normal((p, n))
    curves = Phi @ C
    if mean_function is not None:
        curves = curves + mean_function[:, None]
    Y = curves + A @ F.T + E
    pop = Phi @ coef_var @ Phi.T + A @ factor_var @ A.T + noise_sd**2 * np.eye(p)
    return GeneratedData(
        Y=Y,
        true_curves=curves,
        true_C=C,
        true_A=A,
        true_F=F,
        population_covariance=0.5 * (pop + pop.T),
        grid=grid,
        generating_system=system,
        fitting_system=fit_system,
        noise=E,
        mean_function=mean_function,
    )


# ---------------------------------------------------------------------------
# Metrics


def mise(true_curves, fitted, grid):
    """Mean over curves of the trapezoid-rule integral of the squared error."""
    true_curves = np.asarray(true_curves, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if true_curves.shape != fitted.shape or true_curves.ndim != 2:
        raise DimensionError(f"shapes {true_curves.shape} and {fitted.shape} differ")
    if grid.shape != (true_curves.shape[0],):
        raise DimensionError("grid length does not match the number of rows")
    return float(np.mean(trapezoid((true_curves - fitted) ** 2, grid, axis=0)))


def rmse_fit(Y, fit):
    """Root mean squared difference between `Y` and the full fitted values."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape != fit.residuals.shape:
        raise DimensionError("Y does not match the fit")
    Phi = evaluate_basis(fit.system, fit.grid)
    resid = Y - Phi @ fit.C_hat - fit.A_hat @ fit.F_hat.T
    return float(np.sqrt(np.mean(resid**2)))


def residual_spectrum(Y, Phi, C_hat):
    """Nonincreasing eigenvalues of the smoothing-residual second moment."""
    vals = np.linalg.eigvalsh(residual_second_moment(Y, Phi, C_hat))
    return np.clip(vals[::-1], 0.0, None)


def run_residual_spectrum(Y, fit):
    """Scree data of the smoothing residuals ``Y - Phi C_hat`` of a fit."""
    Phi = evaluate_basis(fit.system, fit.grid)
    return residual_spectrum(Y, Phi, fit.C_hat)


def spiked_spectrum(n, p, spikes, seed, noise_var=1.0):
    """Eigenvalues of the second moment ``X X^T / (n p)`` of ``n`` draws from
    ``N(0, noise_var I + V diag(spikes) V^T)`` in dimension ``p``.

    `V` holds orthonormal directions drawn at random.  Used to exercise the
    factor-count rule on spectra with a known number of spikes.
    """
    spikes = np.asarray(spikes, dtype=float).ravel()
    if spikes.size > p or np.any(spikes < 0):
        raise ArgumentError("need at most p nonnegative spikes")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    X = np.sqrt(noise_var) * rng.standard_normal((p, n))
    if spikes.size:
        V, _ = np.linalg.qr(rng.standard_normal((p, spikes.size)))
        X += V @ (np.sqrt(spikes)[:, None] * rng.standard_normal((spikes.size, n)))
    vals = np.linalg.eigvalsh(X @ X.T / (n * p))
    return np.clip(vals[::-1], 0.0, None)


# ---------------------------------------------------------------------------
# Monte-Carlo drivers


def derive_seed(master_seed, design_index, replication):
    """64-bit replication seed from ``(master_seed, design_index, replication)``."""
    words = np.random.SeedSequence(
        [int(master_seed), int(design_index), int(replication)]
    ).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def _worker_count(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("FASM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ArgumentError(f"FASM_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _run_tasks(func, tasks, workers):
    workers = min(_worker_count(workers), len(tasks)) if tasks else 1
    if workers <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


@dataclass(frozen=True)
class CellSummary:
    scenario: str
    n: int
    p: int
    sigma: float
    delta: float | None
    method: str
    metric: str
    mean: float
    std_error: float
    replications: int


CSV_COLUMNS = (
    "scenario", "n", "p", "sigma", "delta", "method", "metric", "mean",
    "std_error", "replications",
)


@dataclass
class ExperimentResult:
    """Summary rows plus the per-replication values behind them.

    ``values[(cell_index, method, metric)]`` holds one value per replication
    in replication order.
    """

    rows: list
    values: dict
    cells: list

    def to_csv(self, path_or_buffer=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(
                [
                    row.scenario, row.n, row.p, f"{row.sigma:.17g}",
                    "" if row.delta is None else f"{row.delta:.17g}",
                    row.method, row.metric, f"{row.mean:.17g}",
                    f"{row.std_error:.17g}", row.replications,
                ]
            )
        text = buf.getvalue()
        if path_or_buffer is None:
            return text
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
        else:
            with open(path_or_buffer, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_text(self):
        header = ["scenario", "n", "p", "sigma", "delta", "method", "metric", "mean", "std_error", "reps"]
        lines = [
            [
                r.scenario, str(r.n), str(r.p), f"{r.sigma:g}",
                "-" if r.delta is None else f"{r.delta:g}", r.method, r.metric,
                f"{r.mean:.4f}", f"{r.std_error:.4f}", str(r.replications),
            ]
            for r in self.rows
        ]
        widths = [max(len(h), *(len(l[i]) for l in lines)) if lines else len(h) for i, h in enumerate(header)]
        fmt = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))  # noqa: E731
        out = [fmt(header), fmt(["-" * w for w in widths])]
        out.extend(fmt(l) for l in lines)
        return "\n".join(out) + "\n"

    def mean(self, method, metric, cell=0):
        return float(np.mean(self.values[(cell, method, metric)]))


def _summarize(cells, per_task, replications, methods_metrics):
    rows, values = [], {}
    for ci, cell in enumerate(cells):
        results = per_task[ci * replications : (ci + 1) * replications]
        for method, metric in methods_metrics:
            vals = np.array([res[(method, metric)] for res in results], dtype=float)
            values[(ci, method, metric)] = vals
            se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            rows.append(
                CellSummary(
                    scenario=cell["kind"], n=cell["n"], p=cell["p"],
                    sigma=float(cell["sigma"]), delta=cell.get("delta"),
                    method=method, metric=metric, mean=float(vals.mean()),
                    std_error=se, replications=int(vals.size),
                )
            )
    return ExperimentResult(rows, values, cells)


def _mise_task(task):
    scenario, methods, config = task
    data = generate(scenario)
    out = {}
    for method in methods:
        cfg = config if method == "fasm" else _bsmooth_config(config)
        fit = fit_fasm(data.Y, data.fitting_system, data.grid, cfg)
        Phi = evaluate_basis(data.fitting_system, data.grid)
        out[(method, "mise")] = mise(data.true_curves, Phi @ fit.C_hat, data.grid)
        out[(method, "r")] = fit.r
    return out


def _bsmooth_config(config):
    fields = {k: getattr(config, k) for k in config.__dataclass_fields__}
    fields.update(factor_rule="none", n_factors=None)
    return FasmConfig(**fields)


def _build_cells(kind, designs, sigmas, replications, master_seed, **extra):
    if int(replications) != replications or replications < 1:
        raise ArgumentError("replications must be a positive integer")
    designs = DEFAULT_DESIGNS[kind] if designs is None else [tuple(d) for d in designs]
    sigmas = DEFAULT_SIGMAS if sigmas is None else tuple(sigmas)
    cells, scenarios = [], []
    for di, (n, p) in enumerate(designs):
        for sigma in sigmas:
            cells.append(dict(kind=kind, n=int(n), p=int(p), sigma=float(sigma), **extra))
            for rep in range(int(replications)):
                scenarios.append(
                    SimulationScenario(
                        kind, int(n), int(p), float(sigma),
                        seed=derive_seed(master_seed, di, rep),
                        **{k: v for k, v in extra.items() if v is not None},
                    )
                )
    return cells, scenarios


def run_mise_experiment(
    kind="setting1", designs=None, sigmas=None, replications=200,
    methods=("fasm", "bsmooth"), master_seed=0, config=None, workers=None,
    noise_sd=None,
):
    """Monte-Carlo MISE of FASM and the penalized smoother.

    One cell per ``(n, p)`` design and ``sigma``.  Replication ``i`` of design
    ``d`` uses seed ``derive_seed(master_seed, d, i)`` for every sigma, so the
    sigma columns of a design share their random draws.
    """
    config = FasmConfig() if config is None else config
    for m in methods:
        if m not in ("fasm", "bsmooth"):
            raise ArgumentError(f"unknown method {m!r}")
    cells, scenarios = _build_cells(
        kind, designs, sigmas, replications, master_seed, noise_sd=noise_sd
    )
    tasks = [(s, tuple(methods), config) for s in scenarios]
    per_task = _run_tasks(_mise_task, tasks, workers)
    metrics = [(m, "mise") for m in methods] + [(m, "r") for m in methods]
    return _summarize(cells, per_task, int(replications), metrics)


def _cov_task(task):
    scenario, config = task
    data = generate(scenario)
    fit = fit_fasm(data.Y, data.fitting_system, data.grid, config)
    Phi = evaluate_basis(data.fitting_system, data.grid)
    est = model_covariance(fit, Phi).total
    samp = sample_covariance(data.Y)
    truth = data.population_covariance
    return {
        ("fasm", "mse"): frobenius_mse(est, truth, "p"),
        ("sample", "mse"): frobenius_mse(samp, truth, "p"),
        ("fasm", "mse_entry"): frobenius_mse(est, truth, "p2"),
        ("sample", "mse_entry"): frobenius_mse(samp, truth, "p2"),
        ("fasm", "r"): fit.r,
    }


def run_cov_experiment(
    kind="setting1", designs=None, sigmas=None, replications=200, master_seed=0,
    config=None, workers=None, noise_sd=None,
):
    """Monte-Carlo loss of the model-based and the sample covariance.

    Reports metric ``mse`` (squared Frobenius error over ``p``) and
    ``mse_entry`` (over ``p**2``, the mean squared entry) against each
    replication's population covariance.
    """
    config = FasmConfig() if config is None else config
    cells, scenarios = _build_cells(
        kind, designs, sigmas, replications, master_seed, noise_sd=noise_sd
    )
    per_task = _run_tasks(_cov_task, [(s, config) for s in scenarios], workers)
    metrics = [
        ("fasm", "mse"), ("sample", "mse"), ("fasm", "mse_entry"),
        ("sample", "mse_entry"), ("fasm", "r"),
    ]
    return _summarize(cells, per_task, int(replications), metrics)


def _step_task(task):
    scenario, config = task
    data = generate(scenario)
    out = {}
    for method in ("fasm", "bsmooth"):
        cfg = config if method == "fasm" else _bsmooth_config(config)
        fit = fit_fasm(data.Y, data.fitting_system, data.grid, cfg)
        out[(method, "rmse")] = rmse_fit(data.Y, fit)
        out[(method, "model_df")] = fit.model_df
        out[(method, "r")] = fit.r
    return out


def run_step_jump_experiment(
    deltas=(1.0, 2.0, 3.0), n=100, p=101, replications=100, master_seed=0,
    config=None, workers=None,
):
    """RMSE and model degrees of freedom of FASM and the smoother on data with
    a common step in the mean."""
    config = FasmConfig() if config is None else config
    if int(replications) != replications or replications < 1:
        raise ArgumentError("replications must be a positive integer")
    cells, tasks = [], []
    for delta in deltas:
        cells.append(dict(kind="step_jump", n=int(n), p=int(p), sigma=0.0, delta=float(delta)))
        for rep in range(int(replications)):
            s = SimulationScenario(
                "step_jump", int(n), int(p), 0.0,
                seed=derive_seed(master_seed, 0, rep), delta=float(delta),
            )
            tasks.append((s, config))
    per_task = _run_tasks(_step_task, tasks, workers)
    metrics = [(m, k) for k in ("rmse", "model_df", "r") for m in ("fasm", "bsmooth")]
    return _summarize(cells, per_task, int(replications), metrics)
