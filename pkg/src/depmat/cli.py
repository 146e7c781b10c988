"""Batch command-line interface.

Subcommands: ``simulate | estimate | bound | coverage | sweep-rate |
sweep-dim``.  Every subcommand reads a JSON config via ``--config``;
``--seed`` overrides the master seed and ``--out`` selects the output
path.  Coverage and sweep runs write their delimited table to ``--out``
and render a figure next to it (same stem, ``.png``).

Exit codes: 0 success, 2 configuration error, 3 vacuous-bound refusal,
1 internal numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, NumericalError, VacuousBoundError
from .harness import (
    ExperimentConfig,
    SpikedSpec,
    bound_report_for,
    run_coverage,
    run_dimension_sweep,
    run_rate_sweep,
    write_csv,
)
from .procgen import HmmSpec, simulate_hmm, simulate_observations, split_seed


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depmat",
        description="Monte Carlo certification of deviation bounds for dependent, "
        "heavy-tailed random matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "draw one observation run and write it as CSV"),
        ("estimate", "run one trial and print the deviation/bound JSON"),
        ("bound", "print the oracle-mode bound report JSON"),
        ("coverage", "Monte Carlo coverage certification (CSV + figure)"),
        ("sweep-rate", "median deviation vs n with fitted slope (CSV + figure)"),
        ("sweep-dim", "median deviation vs p at fixed effective rank (CSV + figure)"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="path to the JSON config")
        cmd.add_argument("--seed", type=int, default=None, help="override master_seed")
        cmd.add_argument("--out", default=None, help="output path")
    return parser


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json_file(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    if args.out is not None:
        config = dataclasses.replace(config, output_path=args.out)
    return config


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _cmd_simulate(config: ExperimentConfig) -> int:
    n = config.n_grid[0]
    seed = split_seed(config.master_seed, 0)
    process = config.process
    if isinstance(process, HmmSpec):
        sample = simulate_hmm(process, n, seed)
    elif isinstance(process, SpikedSpec):
        sample = process.sample(n, seed)
    else:
        sample = simulate_observations(process, n, seed)
    header = ("index",) + tuple(f"y{j}" for j in range(sample.shape[1]))
    rows = (
        {"index": i, **{f"y{j}": float(v) for j, v in enumerate(row)}}
        for i, row in enumerate(sample)
    )
    if config.output_path:
        write_csv(config.output_path, header, rows)
        print(f"wrote {sample.shape[0]} rows to {config.output_path}")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(repr(row[h]) if isinstance(row[h], float) else str(row[h])
                           for h in header))
    return 0


def _cmd_estimate(config: ExperimentConfig) -> int:
    from .harness import _machinery  # single-trial reuse of the coverage path

    n = config.n_grid[0]
    machinery = _machinery(config, n)
    deviation, bound = machinery.trial(split_seed(config.master_seed, 0))
    _emit(
        {
            "estimator": config.estimator.kind,
            "regime": machinery.report.regime,
            "n": n,
            "p": config.p,
            "deviation": deviation,
            "bound": bound,
            "covered": bool(deviation <= bound),
        },
        config.output_path,
    )
    return 0


def _cmd_bound(config: ExperimentConfig) -> int:
    report = bound_report_for(config)
    text = report.to_json()
    if config.output_path:
        Path(config.output_path).write_text(text + "\n")
    print(text)
    return 0


def _figure_path(out: str) -> Path:
    return Path(out).with_suffix(".png")


def _cmd_coverage(config: ExperimentConfig) -> int:
    report = run_coverage(config)
    if config.output_path:
        report.write_csv(config.output_path)
        from . import plots

        plots.coverage_figure(report, _figure_path(config.output_path))
    print(json.dumps(report.as_dict(), indent=2))
    return 0


def _cmd_sweep_rate(config: ExperimentConfig) -> int:
    result = run_rate_sweep(config)
    if config.output_path:
        result.write_csv(config.output_path)
        from . import plots

        plots.rate_figure(result, _figure_path(config.output_path))
    print(json.dumps(result.as_dict(), indent=2))
    return 0


def _cmd_sweep_dim(config: ExperimentConfig) -> int:
    result = run_dimension_sweep(config)
    if config.output_path:
        result.write_csv(config.output_path)
        from . import plots

        plots.dimension_figure(result, _figure_path(config.output_path))
    print(json.dumps(result.as_dict(), indent=2))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "bound": _cmd_bound,
    "coverage": _cmd_coverage,
    "sweep-rate": _cmd_sweep_rate,
    "sweep-dim": _cmd_sweep_dim,
}


def cli(argv) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        config = _load_config(args)
        return _COMMANDS[args.command](config)
    except (ConfigError, DomainError) as exc:
        # contract violations reachable from here are config-induced
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VacuousBoundError as exc:
        print(f"refusing to run: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
