"""Command-line front-end.

Four subcommands::

    ngdim test      one dimension test (bootstrap or asymptotic) on a dataset
    ngdim estimate  sequential estimation of the signal count
    ngdim simulate  Monte-Carlo rejection rates or estimator frequencies
    ngdim unmix     two-scatter unmixing; latent components to CSV

Data come either from ``--input`` (CSV, one observation per row,
header auto-detected) or from a built-in model via ``--sim-model``.
Every run prints a human-readable summary to standard output and, with
``--report PATH``, writes a machine-readable report that echoes the
full configuration including the seed, so any report reproduces
itself.  Results never depend on ``--threads``.

Exit codes: 0 success (a statistical *rejection* is a successful run),
2 configuration errors, 3 input-data errors, 4 numerical failures,
1 unexpected internal errors.

Environment: ``NGDIM_SEED`` and ``NGDIM_THREADS`` supply defaults for
``--seed`` and ``--threads``; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from ._rng import NS_SIM_DATA, derive_rng
from .dimtest import (
    METHOD_LABELS,
    BootstrapConfig,
    asymptotic_test_fobi,
    bootstrap_test,
    method_spec,
)
from .estimator import estimate_divide_conquer, estimate_incremental
from .exceptions import InputDataError, NgdimError
from .report import format_table, format_value, render_report, write_csv, write_text
from .simulation import (
    MODEL_NAMES,
    estimator_experiment,
    model_spec,
    rejection_rate_experiment,
    sample_model,
)
from .unmixing import latent_components, two_scatter_unmixing

__all__ = ["main", "build_parser", "ingest_csv"]

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4


def _version() -> str:
    try:
        return metadata.version("ngdim")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# ---------------------------------------------------------------------------
# data ingestion


def ingest_csv(path) -> np.ndarray:
    """Read a CSV of observations into a p x n data matrix.

    One observation per row; an optional header is detected when no
    cell of the first row parses as a number.  Non-numeric or
    non-finite cells are rejected with their (1-based) row and column;
    so are ragged rows, empty files and files with no more rows than
    columns.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            raw = [row for row in csv.reader(handle) if row]
    except OSError as exc:
        raise InputDataError(f"cannot read {path}: {exc}") from exc
    if not raw:
        raise InputDataError(f"{path}: empty file")

    def parses(cell: str) -> bool:
        try:
            float(cell)
        except ValueError:
            return False
        return True

    start = 1 if not any(parses(c) for c in raw[0]) else 0
    if start == len(raw):
        raise InputDataError(f"{path}: no data rows after the header")
    width = len(raw[start])
    data = []
    for ri, row in enumerate(raw[start:], start=start + 1):
        if len(row) != width:
            raise InputDataError(
                f"{path}: row {ri} has {len(row)} cells, expected {width}"
            )
        values = []
        for ci, cell in enumerate(row, start=1):
            try:
                value = float(cell)
            except ValueError:
                raise InputDataError(
                    f"{path}: non-numeric cell at row {ri}, column {ci}: {cell!r}"
                ) from None
            if not math.isfinite(value):
                raise InputDataError(
                    f"{path}: missing or non-finite value at row {ri}, column {ci}"
                )
            values.append(value)
        data.append(values)
    n, p = len(data), width
    if n <= p:
        raise InputDataError(
            f"{path}: need more observations than variables (n={n}, p={p})"
        )
    return np.asarray(data, dtype=float).T


def _load_data(args) -> tuple[np.ndarray, str]:
    """Resolve the data source of a subcommand to (X, description)."""
    if args.input is not None:
        return ingest_csv(args.input), str(args.input)
    spec = model_spec(args.sim_model)
    rng = derive_rng(args.sim_seed, NS_SIM_DATA)
    X, _, _ = sample_model(spec, args.sim_n, rng)
    return X, f"sim:{spec.name}(n={args.sim_n},seed={args.sim_seed})"


# ---------------------------------------------------------------------------
# parser


def _env_int(name: str) -> int | None:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"environment variable {name}={raw!r} is not an integer") from None


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = _env_int("NGDIM_SEED")
    return env if env is not None else 0


def _resolve_threads(args) -> int:
    if args.threads is not None:
        value = args.threads
    else:
        env = _env_int("NGDIM_THREADS")
        value = env if env is not None else (os.cpu_count() or 1)
    if value < 1:
        raise ValueError(f"thread count must be at least 1 (got {value})")
    return value


def _pair_options(args) -> dict:
    return {
        "pairing_d": args.pairing_d,
        "huber_q": args.huber_q,
        "huber_tail": args.huber_tail,
        "t_nu": args.t_nu,
    }


def _add_source_options(sub) -> None:
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", metavar="CSV", help="data file, one observation per row")
    group.add_argument(
        "--sim-model",
        metavar="NAME",
        help=f"generate data from a built-in model: {', '.join(MODEL_NAMES)}",
    )
    sub.add_argument("--sim-n", type=int, default=1000, help="simulated sample size (default 1000)")
    sub.add_argument("--sim-seed", type=int, default=0, help="seed of the simulated dataset (default 0)")


def _add_pair_options(sub) -> None:
    sub.add_argument(
        "--method",
        default="cov-cov4",
        help=f"method label: {', '.join(METHOD_LABELS)} (default cov-cov4)",
    )
    sub.add_argument(
        "--pairing-d",
        type=int,
        default=100,
        help="pairs per observation for the incomplete symmetrized pair (default 100)",
    )
    sub.add_argument("--huber-q", type=float, default=0.9, help="Huber weight quantile (default 0.9)")
    sub.add_argument(
        "--huber-tail",
        choices=("standard", "paper"),
        default="standard",
        help="tail convention of the Huber scatter weight (default standard)",
    )
    sub.add_argument("--t-nu", type=float, default=1.0, help="t-likelihood degrees of freedom (default 1 = Cauchy)")


def _add_run_options(sub) -> None:
    sub.add_argument("--seed", type=int, default=None, help="master seed (default: $NGDIM_SEED or 0)")
    sub.add_argument(
        "--threads",
        "-j",
        type=int,
        default=None,
        help="worker processes (default: $NGDIM_THREADS or all cores); results never depend on this",
    )
    sub.add_argument("--report", metavar="PATH", help="write a machine-readable report file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ngdim",
        description="Non-Gaussian signal dimension: two-scatter unmixing, "
        "bootstrap and asymptotic tests, and estimation of the signal count.",
    )
    parser.add_argument("--version", action="version", version=f"ngdim {_version()}")
    commands = parser.add_subparsers(dest="command", required=True)

    test = commands.add_parser("test", help="test that exactly k components are non-Gaussian")
    _add_source_options(test)
    _add_pair_options(test)
    test.add_argument("--k", type=int, required=True, help="candidate signal count under the null")
    test.add_argument(
        "--test",
        choices=("bootstrap", "asymptotic"),
        default="bootstrap",
        dest="test_kind",
        help="calibration: resampling bootstrap or the asymptotic law (fobi method only)",
    )
    test.add_argument(
        "--model",
        choices=("ngca", "ngica"),
        default="ngca",
        help="model assumption: dependent signals resampled jointly (ngca) or per-row (ngica)",
    )
    test.add_argument(
        "--noise",
        choices=("parametric", "rotation"),
        default="parametric",
        help="noise regeneration strategy for the bootstrap (default parametric)",
    )
    test.add_argument("-M", "--replicates", type=int, default=200, help="bootstrap replicates (default 200)")
    test.add_argument(
        "--mc-draws",
        type=int,
        default=100_000,
        help="Monte-Carlo draws for the asymptotic reference law (default 100000)",
    )
    test.add_argument("--alpha", type=float, default=0.05, help="level for the reported decision (default 0.05)")
    test.add_argument("--replicates-csv", metavar="PATH", help="dump replicate statistics to CSV")
    _add_run_options(test)
    test.set_defaults(handler=cmd_test)

    estimate = commands.add_parser("estimate", help="estimate the number of non-Gaussian components")
    _add_source_options(estimate)
    _add_pair_options(estimate)
    estimate.add_argument(
        "--strategy",
        choices=("incremental", "divide-conquer"),
        default="incremental",
        help="search strategy over candidate counts (default incremental)",
    )
    estimate.add_argument("--model", choices=("ngca", "ngica"), default="ngca", help="model assumption")
    estimate.add_argument("--noise", choices=("parametric", "rotation"), default="parametric")
    estimate.add_argument("-M", "--replicates", type=int, default=200, help="bootstrap replicates per test")
    estimate.add_argument("--alpha", type=float, default=0.05, help="test level (default 0.05)")
    _add_run_options(estimate)
    estimate.set_defaults(handler=cmd_estimate)

    simulate = commands.add_parser("simulate", help="Monte-Carlo experiments on the built-in models")
    simulate.add_argument(
        "--model",
        required=True,
        metavar="NAME",
        help=f"model to simulate: {', '.join(MODEL_NAMES)}",
    )
    simulate.add_argument("--n", type=int, default=1000, help="sample size per repetition (default 1000)")
    simulate.add_argument("--reps", type=int, default=None, help="repetitions (default 200; 1000 with --full)")
    simulate.add_argument("-M", "--replicates", type=int, default=200, help="bootstrap replicates (default 200)")
    simulate.add_argument(
        "--ks",
        default="2,3,4",
        help="comma-separated candidate counts for rejection rates (default 2,3,4)",
    )
    simulate.add_argument(
        "--methods",
        default="cov-cov4",
        help=f"comma-separated method labels (default cov-cov4; choices {', '.join(METHOD_LABELS)})",
    )
    simulate.add_argument(
        "--assumption",
        choices=("ngca", "ngica"),
        default="ngca",
        help="model assumption passed to the tests (default ngca)",
    )
    simulate.add_argument("--noise", choices=("parametric", "rotation"), default="parametric")
    simulate.add_argument("--alpha", type=float, default=0.05, help="test level (default 0.05)")
    simulate.add_argument(
        "--estimator",
        action="store_true",
        help="tabulate estimated signal counts instead of rejection rates",
    )
    simulate.add_argument(
        "--strategies",
        default="incremental",
        help="comma-separated strategies for --estimator (incremental, divide-conquer)",
    )
    simulate.add_argument("--rep-csv", metavar="PATH", help="dump per-repetition results to CSV")
    simulate.add_argument(
        "--full",
        action="store_true",
        help="paper-scale defaults (1000 repetitions); expect a very long run",
    )
    # pair tuning knobs shared with test/estimate
    simulate.add_argument("--pairing-d", type=int, default=100, help=argparse.SUPPRESS)
    simulate.add_argument("--huber-q", type=float, default=0.9, help=argparse.SUPPRESS)
    simulate.add_argument("--huber-tail", choices=("standard", "paper"), default="standard", help=argparse.SUPPRESS)
    simulate.add_argument("--t-nu", type=float, default=1.0, help=argparse.SUPPRESS)
    _add_run_options(simulate)
    simulate.set_defaults(handler=cmd_simulate)

    unmix = commands.add_parser("unmix", help="two-scatter unmixing; write latent components to CSV")
    _add_source_options(unmix)
    _add_pair_options(unmix)
    unmix.add_argument("--k", type=int, default=None, help="optional signal count for noise-block ordering")
    unmix.add_argument("--output", metavar="PATH", help="write latent components (one observation per row)")
    _add_run_options(unmix)
    unmix.set_defaults(handler=cmd_unmix)

    return parser


# ---------------------------------------------------------------------------
# subcommand handlers


def _echo_source(args, n: int, p: int, source: str) -> dict:
    return {
        "command": args.command,
        "version": _version(),
        "source": source,
        "n": n,
        "p": p,
    }


def _pair_echo(args) -> dict:
    return {
        "method": args.method,
        "pairing_d": args.pairing_d,
        "huber_q": args.huber_q,
        "huber_tail": args.huber_tail,
        "t_nu": args.t_nu,
    }


def cmd_test(args) -> int:
    X, source = _load_data(args)
    p, n = X.shape
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    if args.test_kind == "asymptotic":
        if args.method != "fobi":
            raise ValueError(
                "the asymptotic calibration is defined for --method fobi only"
            )
        outcome = asymptotic_test_fobi(
            X, args.k, args.model, seed=seed, mc_draws=args.mc_draws
        )
    else:
        meth = method_spec(args.method, **_pair_options(args))
        config = BootstrapConfig(
            pair=meth.pair,
            model=args.model,
            noise=args.noise,
            replicates=args.replicates,
            seed=seed,
            statistic=meth.statistic,
        )
        outcome = bootstrap_test(X, args.k, config, threads=threads)
    decision = "reject" if outcome.rejects(args.alpha) else "accept"

    print(f"{outcome.method}: H0 'exactly k={args.k} non-Gaussian components'")
    print(f"data: {source} (p={p}, n={n}), assumption={args.model}, seed={seed}")
    print(f"statistic = {format_value(outcome.statistic)}")
    print(f"p-value   = {format_value(outcome.p_value)}")
    print(f"decision  = {decision} at alpha={format_value(args.alpha)}")

    if args.report:
        config_echo = _echo_source(args, n, p, source)
        config_echo.update(_pair_echo(args))
        config_echo.update(
            {
                "test": args.test_kind,
                "assumption": args.model,
                "noise": args.noise,
                "k": args.k,
                "replicates": args.replicates,
                "mc_draws": args.mc_draws,
                "alpha": args.alpha,
                "seed": seed,
            }
        )
        result = {
            "method": outcome.method,
            "statistic": outcome.statistic,
            "p_value": outcome.p_value,
            "decision": decision,
            "sigma1": outcome.sigma1,
            "replicates_used": None
            if outcome.replicates is None
            else len(outcome.replicates),
            "failures": outcome.failures,
        }
        write_text(
            args.report,
            render_report("test", [("config", config_echo), ("result", result)]),
        )
    if args.replicates_csv and outcome.replicates is not None:
        rows = [
            {"replicate": j, "statistic": t}
            for j, t in enumerate(outcome.replicates)
        ]
        write_csv(args.replicates_csv, ["replicate", "statistic"], rows)
    return EXIT_OK


def cmd_estimate(args) -> int:
    X, source = _load_data(args)
    p, n = X.shape
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    meth = method_spec(args.method, **_pair_options(args))
    config = BootstrapConfig(
        pair=meth.pair,
        model=args.model,
        noise=args.noise,
        replicates=args.replicates,
        seed=seed,
        statistic=meth.statistic,
    )
    estimator = (
        estimate_incremental if args.strategy == "incremental" else estimate_divide_conquer
    )
    estimate = estimator(X, config, args.alpha, threads=threads)
    visited_rows = [
        {"k": v.k, "p_value": v.p_value, "decision": v.decision}
        for v in estimate.visited
    ]

    print(f"estimated non-Gaussian components: q_hat = {estimate.q_hat}")
    print(
        f"strategy={estimate.strategy}, method={meth.label}, alpha={format_value(args.alpha)}, "
        f"data: {source} (p={p}, n={n}), seed={seed}"
    )
    for line in format_table(["k", "p_value", "decision"], visited_rows):
        print(line)

    if args.report:
        config_echo = _echo_source(args, n, p, source)
        config_echo.update(_pair_echo(args))
        config_echo.update(
            {
                "strategy": args.strategy,
                "assumption": args.model,
                "noise": args.noise,
                "replicates": args.replicates,
                "alpha": args.alpha,
                "seed": seed,
            }
        )
        result = {
            "q_hat": estimate.q_hat,
            "tests_performed": estimate.tests_performed(),
        }
        write_text(
            args.report,
            render_report(
                "estimate",
                [("config", config_echo), ("result", result)],
                [("visited", ["k", "p_value", "decision"], visited_rows)],
            ),
        )
    return EXIT_OK


def _split_list(raw: str, cast):
    items = [part.strip() for part in str(raw).split(",") if part.strip()]
    if not items:
        raise ValueError(f"empty list option: {raw!r}")
    return [cast(part) for part in items]


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    threads = _resolve_threads(args)
    reps = args.reps if args.reps is not None else (1000 if args.full else 200)
    if args.full:
        print(
            "warning: --full runs paper-scale repetitions; expect a very long run",
            file=sys.stderr,
        )
    spec = model_spec(args.model, seed=seed)
    methods = _split_list(args.methods, str)
    if args.estimator:
        strategies = _split_list(args.strategies, str)
        report = estimator_experiment(
            spec,
            args.n,
            strategies,
            methods,
            reps,
            master_seed=seed,
            M=args.replicates,
            alpha=args.alpha,
            assumption=args.assumption,
            noise=args.noise,
            pair_options=_pair_options(args),
            threads=threads,
        )
        columns = [
            "model", "n", "pair", "assumption", "strategy",
            "q_hat", "frequency", "repetitions",
        ]
        detail_columns = ["rep", "strategy", "method", "seed", "q_hat", "tests"]
    else:
        ks = _split_list(args.ks, int)
        report = rejection_rate_experiment(
            spec,
            args.n,
            ks,
            methods,
            reps,
            M=args.replicates,
            master_seed=seed,
            alpha=args.alpha,
            assumption=args.assumption,
            noise=args.noise,
            pair_options=_pair_options(args),
            threads=threads,
        )
        columns = [
            "model", "n", "pair", "assumption", "k",
            "rejection_rate", "repetitions", "M",
        ]
        detail_columns = ["rep", "method", "k", "seed", "statistic", "p_value", "decision"]

    print(f"{report.kind}: model={spec.name}, n={args.n}, reps={reps}, seed={seed}")
    for line in format_table(columns, report.rows):
        print(line)
    if report.failures:
        print(f"failed repetitions: {len(report.failures)}")

    if args.report:
        config_echo = {"command": args.command, "version": _version()}
        config_echo.update(report.config)
        tables = [("results", columns, report.rows)]
        if report.failures:
            tables.append(("failures", ["rep", "error"], report.failures))
        write_text(args.report, render_report(report.kind, [("config", config_echo)], tables))
    if args.rep_csv:
        write_csv(args.rep_csv, detail_columns, report.details)
    return EXIT_OK


def cmd_unmix(args) -> int:
    X, source = _load_data(args)
    p, n = X.shape
    meth = method_spec(args.method, **_pair_options(args))
    rule = "closest_to_one" if meth.statistic == "fobi" else "min_variance"
    fit = two_scatter_unmixing(X, meth.pair, k=args.k, noise_rule=rule)
    Z = latent_components(X, fit)

    print(f"unmixing with pair {meth.pair.label}: data {source} (p={p}, n={n})")
    d_rows = [
        {"component": i + 1, "kurtosis": d} for i, d in enumerate(fit.D)
    ]
    for line in format_table(["component", "kurtosis"], d_rows):
        print(line)
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow([f"z{i + 1}" for i in range(p)])
            for column in Z.T:
                writer.writerow([repr(float(v)) for v in column])
        print(f"latent components written to {args.output}")

    if args.report:
        config_echo = _echo_source(args, n, p, source)
        config_echo.update(_pair_echo(args))
        config_echo.update({"k": args.k, "output": args.output})
        result = {"pair": meth.pair.label, "noise_rule": rule}
        write_text(
            args.report,
            render_report(
                "unmix",
                [("config", config_echo), ("result", result)],
                [("kurtosis", ["component", "kurtosis"], d_rows)],
            ),
        )
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except InputDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NgdimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
