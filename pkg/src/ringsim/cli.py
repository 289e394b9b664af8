"""Command-line harness: run scenarios, compare arms, sweep parameters, plot.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiment import (CompareError, TruncatedRunError, compare_dirs,
                         run_scenario, sweep, write_comparison)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringsim",
        description=("Packet-level simulator of ring collectives with "
                     "in-network progress tracking and selective ECN "
                     "throttling of outpacing flows."))
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario over its seed list")
    run_p.add_argument("config", help="scenario TOML file")
    run_p.add_argument("-o", "--output", required=True, help="output directory")
    run_p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="config override, e.g. symphony.enable=true")
    run_p.add_argument("--workers", type=int, default=None,
                       help=f"seed-level parallelism (or ${'{'}RINGSIM_WORKERS{'}'})")

    cmp_p = sub.add_parser("compare", help="paired comparison of two run dirs")
    cmp_p.add_argument("baseline", help="baseline run directory")
    cmp_p.add_argument("treatment", help="treatment run directory")
    cmp_p.add_argument("-o", "--output", default=None,
                       help="directory for comparison CSVs (default: print only)")

    sweep_p = sub.add_parser("sweep", help="re-run a scenario across parameter values")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--param", required=True,
                         help="k | chunk_bytes | imbalance_ratio | t_win | n_warmup")
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated numeric list")
    sweep_p.add_argument("-o", "--output", required=True)
    sweep_p.add_argument("--override", action="append", default=[])
    sweep_p.add_argument("--workers", type=int, default=None)

    plot_p = sub.add_parser("plot", help="render charts from a run or comparison dir")
    plot_p.add_argument("directory")
    plot_p.add_argument("-o", "--output", default=None,
                        help="figure directory (default: <dir>/figures)")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config, args.override)
    summaries = run_scenario(cfg, args.output, workers=args.workers)
    print(f"{cfg.name}: {len(cfg.run.seeds)} run(s) -> {args.output}")
    for s in summaries:
        print(f"  {s.run_id} job{s.job_id}: cct={s.cct_ns / 1e6:.3f}ms "
              f"jct={s.jct_ns / 1e6:.3f}ms max_overlap={s.max_overlap} "
              f"marks(red={s.red_marks}, symphony={s.symphony_marks})")
    return EXIT_OK


def _cmd_compare(args) -> int:
    report = compare_dirs(args.baseline, args.treatment)
    print(f"baseline:  {args.baseline}")
    print(f"treatment: {args.treatment}")
    print(f"paired runs: {len(report.seeds)}")
    header = f"{'metric':<20}{'base median':>14}{'treat median':>14}{'improvement':>13}"
    print(header)
    for metric, st in report.stats.items():
        print(f"{metric:<20}{st['baseline_median']:>14.6g}"
              f"{st['treatment_median']:>14.6g}"
              f"{st['improvement_median']:>12.1%}")
    if args.output:
        write_comparison(report, args.output)
        print(f"comparison tables -> {args.output}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.override)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--values: {exc}") from exc
    if not values:
        raise ConfigError("--values: expected at least one number")
    rows = sweep(cfg, args.param, values, args.output, workers=args.workers)
    print(f"{'value':>12}{'median cct (ms)':>18}{'median overlap':>16}")
    for r in rows:
        print(f"{r['value']:>12g}{r['median_cct_ns'] / 1e6:>18.3f}"
              f"{r['median_max_overlap']:>16.1f}")
    print(f"sweep outputs -> {args.output}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plotting import render_directory

    produced = render_directory(args.directory, args.output)
    for p in produced:
        print(f"wrote {p}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "plot":
            return _cmd_plot(args)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncatedRunError, CompareError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
