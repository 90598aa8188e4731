"""Command-line interface: simulate trajectories, run benchmarks, re-render.

Exit codes: 0 success, 1 configuration error (including bad flags),
2 runtime estimator failure (a partial report is still written).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import run_experiment
from .config import load_config
from .report import emit_report, load_report, render_table, write_summary_csv
from .runners import ConfigError
from .signals import TrajectoryFormatError, gen_sine, save_trajectory

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ESTIMATOR_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors (exit code 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nnsse", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a generated noisy-sine trajectory CSV")
    sim.add_argument("--amplitude", type=float, default=10.0)
    sim.add_argument("--period-s", type=float, default=1.0)
    sim.add_argument("--rate-hz", type=float, default=200.0)
    sim.add_argument("--steps", type=int, default=10_000)
    sim.add_argument("--noise-var", type=float, default=1.0)
    sim.add_argument("--seed", type=int, default=1)
    sim.add_argument("--out", type=Path, required=True, help="output CSV path")

    run = sub.add_parser("run", help="run a benchmark config and write its report")
    run.add_argument("--config", type=Path, required=True)
    run.add_argument("--seed", type=int, default=None,
                     help="override the config's seed list with one seed")
    run.add_argument("--out-dir", type=Path, default=Path("report"))
    run.add_argument("--format", choices=("table", "csv"), default="table")
    run.add_argument("--parallel", type=int, default=1,
                     help="number of seed runs to execute concurrently")
    run.add_argument("--audit", action="store_true",
                     help="track covariance symmetry/eigenvalue health per step")

    rep = sub.add_parser("report", help="re-render a saved report")
    rep.add_argument("--report", type=Path, required=True,
                     help="report.json or the directory containing it")
    rep.add_argument("--format", choices=("table", "csv"), default="table")
    rep.add_argument("--out-dir", type=Path, default=None,
                     help="write re-rendered files here (default: print only)")
    return parser


def _cmd_simulate(args) -> int:
    traj = gen_sine(args.amplitude, args.period_s, args.rate_hz, args.steps,
                    args.noise_var, args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_trajectory(args.out, traj)
    print(f"wrote {args.out} ({args.steps} steps, seed {args.seed})")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seeds = [args.seed]
    report = run_experiment(config, audit=args.audit, parallel=args.parallel)
    written = emit_report(report, args.format, args.out_dir)
    if args.format == "table":
        from .report import report_to_dict
        print(render_table(report_to_dict(report)))
    for path in written:
        print(f"wrote {path}")
    if report.failures:
        for seed, name, failure in report.failures:
            print(f"estimator failure (seed {seed}, {name}): {failure}",
                  file=sys.stderr)
        return EXIT_ESTIMATOR_FAILURE
    return EXIT_OK


def _cmd_report(args) -> int:
    data = load_report(args.report)
    if args.format == "table":
        text = render_table(data)
        print(text)
        if args.out_dir is not None:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            (args.out_dir / "table.txt").write_text(text, encoding="utf-8")
    else:
        out = args.out_dir if args.out_dir is not None else Path(args.report)
        if out.is_file():
            out = out.parent
        out.mkdir(parents=True, exist_ok=True)
        write_summary_csv(out / "summary.csv", data)
        print(f"wrote {out / 'summary.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
    except (ConfigError, TrajectoryFormatError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
