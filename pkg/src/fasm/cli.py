"""Command-line front end.

``fasm fit`` smooths the curves in a CSV file, ``fasm spectrum`` writes the
scree data of the smoothing residuals, and ``fasm simulate`` / ``fasm cov``
run the Monte-Carlo experiments.  Options may also come from a flat
``key = value`` file given with ``--config``; command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .basis import Interval, build_bspline_system, build_fourier_system, evaluate_basis
from .csvio import load_config_file, load_matrix_csv, write_matrix_csv
from .errors import EXIT_CODES, ArgumentError, FasmError, ParseError
from .estimator import FACTOR_RULES, SSE_KINDS, FasmConfig, fit_fasm
from .simulation import (
    DEFAULT_DESIGNS,
    SCENARIO_KINDS,
    run_cov_experiment,
    run_mise_experiment,
    run_residual_spectrum,
    run_step_jump_experiment,
)

__all__ = ["build_parser", "main", "run_cli"]

HELP_WIDTH = 80
FIT_JSON_FIELDS = (
    "alpha_trace", "r", "df", "model_df", "iterations", "converged", "alpha",
    "mgcv", "mgcv_trace", "r_trace", "change_trace",
)


class _UsageError(ArgumentError):
    pass


class _Parser(argparse.ArgumentParser):
    # Report usage problems through the exit-code table instead of exiting.
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _formatter(prog):
    return argparse.RawDescriptionHelpFormatter(prog, width=HELP_WIDTH, max_help_position=32)


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {value}")
    return value


def _finite_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not np.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
    return value


def _float_list(text):
    items = [s for s in text.replace(" ", "").split(",") if s]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    return tuple(_finite_float(s) for s in items)


def _design_list(text):
    designs = []
    for item in (s for s in text.replace(" ", "").split(",") if s):
        parts = item.lower().split("x")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"design {item!r} is not of the form NxP")
        designs.append((_positive_int(parts[0]), _positive_int(parts[1])))
    if not designs:
        raise argparse.ArgumentTypeError("expected designs such as 20x51,50x51")
    return tuple(designs)


def _seed(text):
    value = _nonneg_int(text)
    if value >= 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def _epilog():
    lines = ["exit codes:"]
    for code in sorted(EXIT_CODES):
        lines.append(f"  {code}  {EXIT_CODES[code]}")
    lines.append("")
    lines.append("environment:")
    lines.append("  FASM_THREADS  cap on worker processes for simulate/cov")
    lines.append("                (default: number of available cores)")
    return "\n".join(lines)


def _add_common(p):
    p.add_argument("--config", metavar="FILE",
                   help="key = value file supplying defaults for any option")
    p.add_argument("-o", "--output", metavar="DIR", default=".",
                   help="output directory (default: %(default)s)")


def _add_model_options(p, with_alpha):
    g = p.add_argument_group("model")
    if with_alpha:
        g.add_argument("--basis", choices=("bspline", "fourier"), default="bspline",
                       help="basis family (default: %(default)s)")
        g.add_argument("--n-basis", type=_positive_int, default=13, metavar="K",
                       help="number of basis functions for fourier (odd) or for "
                            "--knots equispaced (default: %(default)s)")
        g.add_argument("--order", type=_positive_int, default=4,
                       help="B-spline order, 4 = cubic (default: %(default)s)")
        g.add_argument("--knots", choices=("grid", "equispaced"), default="grid",
                       help="B-spline knot rule: a knot at every interior grid point, "
                            "or --n-basis functions on equispaced knots "
                            "(default: %(default)s)")
        g.add_argument("--alpha-min", type=_finite_float, default=1e-6, metavar="X",
                       help="smallest penalty weight, in units of p/K "
                            "(default: %(default)s)")
        g.add_argument("--alpha-max", type=_finite_float, default=1e4, metavar="X",
                       help="largest penalty weight, in units of p/K "
                            "(default: %(default)s)")
        g.add_argument("--alpha-count", type=_positive_int, default=40, metavar="N",
                       help="number of log-spaced penalty weights (default: %(default)s)")
    g.add_argument("--factor-rule", choices=FACTOR_RULES, default="auto",
                   help="factor count: eigenvalue ratio, fixed, or no factors "
                        "(default: %(default)s)")
    g.add_argument("--n-factors", type=_nonneg_int, metavar="R",
                   help="number of factors for --factor-rule fixed")
    g.add_argument("--kmax", type=_positive_int,
                   help="largest factor count searched (default: min(8, min(n,p)/2))")
    g.add_argument("--q", type=_finite_float, default=0.5,
                   help="relative ratio gap needed to declare factors "
                        "(default: %(default)s)")
    g.add_argument("--delta", type=_finite_float,
                   help="stop when the coefficient change falls below this "
                        "(default: 1e-6*sqrt(K*n))")
    g.add_argument("--max-iterations", type=_positive_int, default=100, metavar="N",
                   help="cap on coefficient solves (default: %(default)s)")
    g.add_argument("--sse", choices=SSE_KINDS, default="projected",
                   help="residual used in the mGCV score (default: %(default)s)")


def _add_experiment_options(p, kinds, default_kind):
    g = p.add_argument_group("experiment")
    g.add_argument("--scenario", choices=kinds, default=default_kind,
                   help="data-generating scenario (default: %(default)s)")
    g.add_argument("--design", type=_design_list, metavar="NxP[,NxP...]",
                   help="sample sizes and grid sizes (default: the scenario's table)")
    g.add_argument("--sigma", type=_float_list, metavar="S[,S...]",
                   help="factor scales (default: 0,0.5,0.75,1)")
    g.add_argument("--replications", type=_positive_int, default=200, metavar="N",
                   help="replications per cell (default: %(default)s)")
    g.add_argument("--seed", type=_seed, default=0,
                   help="master seed (default: %(default)s)")
    g.add_argument("--workers", type=_positive_int, metavar="N",
                   help="worker processes (default: FASM_THREADS or core count)")
    g.add_argument("--noise-sd", type=_finite_float, metavar="S",
                   help="override the idiosyncratic noise standard deviation")
    return g


def build_parser():
    """The argument parser with its four subcommands."""
    parser = _Parser(
        prog="fasm",
        description="Factor-augmented penalized smoothing of functional data.",
        epilog=_epilog(),
        formatter_class=_formatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    fit = sub.add_parser(
        "fit", help="fit curves stored in a CSV file",
        description="Fit the p x n curves in INPUT (rows = grid points) and write\n"
                    "coefficients.csv, loadings.csv, factors.csv, fitted.csv,\n"
                    "residuals.csv and fit.json to the output directory.",
        epilog=_epilog(), formatter_class=_formatter,
    )
    fit.add_argument("input", metavar="INPUT", help="matrix CSV file")
    _add_common(fit)
    _add_model_options(fit, with_alpha=True)

    spectrum_cmd = sub.add_parser(
        "spectrum", help="eigenvalues of the smoothing residuals",
        description="Fit INPUT as in 'fit' and write eigenvalues.csv, the\n"
                    "nonincreasing eigenvalues of the residual second moment.",
        epilog=_epilog(), formatter_class=_formatter,
    )
    spectrum_cmd.add_argument("input", metavar="INPUT", help="matrix CSV file")
    _add_common(spectrum_cmd)
    _add_model_options(spectrum_cmd, with_alpha=True)

    sim = sub.add_parser(
        "simulate", help="Monte-Carlo MISE (or step-jump RMSE) experiment",
        description="Run a seeded Monte-Carlo comparison of FASM and the plain\n"
                    "penalized smoother; writes summary.csv and summary.txt.\n"
                    "The step_jump scenario reports RMSE and model degrees of\n"
                    "freedom per --jump value instead of MISE per sigma.",
        epilog=_epilog(), formatter_class=_formatter,
    )
    _add_common(sim)
    g = _add_experiment_options(sim, SCENARIO_KINDS, "setting1")
    g.add_argument("--jump", type=_float_list, metavar="D[,D...]", default=(1.0, 2.0, 3.0),
                   help="step sizes for step_jump (default: 1,2,3)")
    _add_model_options(sim, with_alpha=False)

    cov = sub.add_parser(
        "cov", help="Monte-Carlo covariance-estimation experiment",
        description="Compare the model-based covariance estimator with the sample\n"
                    "covariance; writes cov_summary.csv and cov_summary.txt.",
        epilog=_epilog(), formatter_class=_formatter,
    )
    _add_common(cov)
    cov_kinds = tuple(k for k in SCENARIO_KINDS if k in DEFAULT_DESIGNS and k != "step_jump")
    _add_experiment_options(cov, cov_kinds, "setting1")
    _add_model_options(cov, with_alpha=False)
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _apply_config_file(parser, argv):
    """Re-parse `argv` with defaults taken from its ``--config`` file."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    entries = load_config_file(args.config)
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    defaults = {}
    for key, (text, line) in entries.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise ParseError(f"unknown option {key!r}", line=line, path=args.config)
        try:
            value = action.type(text) if action.type else text
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ParseError(f"{key}: {exc}", line=line, path=args.config) from None
        if action.choices is not None and value not in action.choices:
            raise ParseError(
                f"{key}: {value!r} is not one of {', '.join(map(str, action.choices))}",
                line=line, path=args.config,
            )
        defaults[key] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _fit_config(args, p=None, K=None):
    if args.factor_rule == "fixed" and args.n_factors is None:
        raise ArgumentError("--factor-rule fixed requires --n-factors")
    alpha_grid = None
    if p is not None:
        if not 0 < args.alpha_min <= args.alpha_max:
            raise ArgumentError("need 0 < --alpha-min <= --alpha-max")
        alpha_grid = tuple(
            np.logspace(np.log10(args.alpha_min), np.log10(args.alpha_max), args.alpha_count)
            * (p / K)
        )
    return FasmConfig(
        alpha_grid=alpha_grid,
        delta=args.delta,
        max_iterations=args.max_iterations,
        factor_rule=args.factor_rule,
        n_factors=args.n_factors if args.factor_rule == "fixed" else None,
        kmax=args.kmax,
        q=args.q,
        sse=args.sse,
    )


def _basis_for(args, grid):
    domain = Interval(grid[0], grid[-1])
    if args.basis == "fourier":
        if args.n_basis % 2 == 0:
            raise ArgumentError("--n-basis must be odd for the fourier basis")
        return build_fourier_system(domain, (args.n_basis - 1) // 2)
    if args.knots == "grid":
        return build_bspline_system(domain, grid[1:-1], args.order)
    n_interior = args.n_basis - args.order
    if n_interior < 0:
        raise ArgumentError("--n-basis must be at least --order")
    interior = np.linspace(domain.lower, domain.upper, n_interior + 2)[1:-1]
    return build_bspline_system(domain, interior, args.order)


def _load_and_fit(args):
    data = load_matrix_csv(args.input)
    if data.values.ndim != 2 or data.values.shape[0] < 2:
        raise ArgumentError(f"{args.input}: need at least two grid points")
    system = _basis_for(args, data.grid)
    config = _fit_config(args, data.grid.size, system.n_basis)
    fit = fit_fasm(data.values, system, data.grid, config)
    return data, fit


def _output_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ArgumentError(f"cannot create output directory {path}: {exc.strerror}") from None
    return path


def _json_value(x):
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(x)


def _cmd_fit(args):
    data, fit = _load_and_fit(args)
    out = _output_dir(args.output)
    labels = data.labels or [f"curve{j + 1}" for j in range(data.values.shape[1])]
    factor_labels = [f"factor{k + 1}" for k in range(fit.r)]
    Phi = evaluate_basis(fit.system, fit.grid)
    write_matrix_csv(os.path.join(out, "coefficients.csv"), fit.C_hat, labels=labels)
    write_matrix_csv(os.path.join(out, "loadings.csv"), fit.A_hat, grid=fit.grid, labels=factor_labels)
    write_matrix_csv(os.path.join(out, "factors.csv"), fit.F_hat, labels=factor_labels)
    fitted = Phi @ fit.C_hat + fit.A_hat @ fit.F_hat.T
    write_matrix_csv(os.path.join(out, "fitted.csv"), fitted, grid=fit.grid, labels=labels)
    write_matrix_csv(os.path.join(out, "residuals.csv"), fit.residuals, grid=fit.grid, labels=labels)
    summary = {name: _json_value(getattr(fit, name)) for name in FIT_JSON_FIELDS}
    with open(os.path.join(out, "fit.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return 0


def _cmd_spectrum(args):
    data, fit = _load_and_fit(args)
    out = _output_dir(args.output)
    values = run_residual_spectrum(data.values, fit)
    write_matrix_csv(os.path.join(out, "eigenvalues.csv"), values[:, None], labels=["eigenvalue"])
    return 0


def _write_summary(result, out, stem):
    result.to_csv(os.path.join(out, f"{stem}.csv"))
    text = result.to_text()
    with open(os.path.join(out, f"{stem}.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)


def _cmd_simulate(args):
    out = _output_dir(args.output)
    config = _fit_config(args)
    if args.scenario == "step_jump":
        designs = args.design or DEFAULT_DESIGNS["step_jump"]
        if len(designs) != 1:
            raise ArgumentError("step_jump takes a single --design")
        (n, p), = designs
        result = run_step_jump_experiment(
            deltas=args.jump, n=n, p=p, replications=args.replications,
            master_seed=args.seed, config=config, workers=args.workers,
        )
    else:
        result = run_mise_experiment(
            args.scenario, designs=args.design, sigmas=args.sigma,
            replications=args.replications, master_seed=args.seed, config=config,
            workers=args.workers, noise_sd=args.noise_sd,
        )
    _write_summary(result, out, "summary")
    return 0


def _cmd_cov(args):
    out = _output_dir(args.output)
    result = run_cov_experiment(
        args.scenario, designs=args.design, sigmas=args.sigma,
        replications=args.replications, master_seed=args.seed,
        config=_fit_config(args), workers=args.workers, noise_sd=args.noise_sd,
    )
    _write_summary(result, out, "cov_summary")
    return 0


_COMMANDS = {"fit": _cmd_fit, "spectrum": _cmd_spectrum, "simulate": _cmd_simulate, "cov": _cmd_cov}


def run_cli(argv):
    """Run one command; returns the process exit status.

    Errors are reported as a single ``fasm: error: ...`` line on stderr.
    """
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        return _COMMANDS[args.command](args)
    except FasmError as exc:
        message = str(exc)
        if not isinstance(exc, _UsageError):
            message = f"fasm: error: {message}"
        print(" ".join(message.split()), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"fasm: error: {exc}", file=sys.stderr)
        return ArgumentError.exit_code


def main(argv=None):
    status = run_cli(sys.argv[1:] if argv is None else list(argv))
    sys.exit(status)


if __name__ == "__main__":
    main()
