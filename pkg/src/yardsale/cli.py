"""Command line entry point: ``yardsale run <config> [options]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, Experiment, load_experiment, load_preset, preset_names
from .harness import RunError, run_many, summarize
from .model import PolicyContractError
from .output import (
    emit_config,
    emit_graph_drawing,
    emit_summary,
    emit_svg,
    emit_timeseries,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

OUT_ENV = "YARDSALE_OUT_DIR"
DEFAULT_OUT = "yardsale-out"

log = logging.getLogger("yardsale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yardsale", description="Yard-sale wealth exchange simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment file or a built-in preset")
    run.add_argument("config", nargs="?", help="TOML experiment file")
    run.add_argument("--preset", help="built-in preset name (instead of a file)")
    run.add_argument("--seed", type=int, help="override run.seed")
    run.add_argument("--runs", type=int, help="override run.n_runs")
    run.add_argument("--out", help=f"output directory (default: output.directory, ${OUT_ENV}, "
                                   f"or ./{DEFAULT_OUT})")
    run.add_argument("--workers", type=int, help="worker processes (results do not depend on this)")
    run.add_argument("--quiet", action="store_true", help="suppress the summary printout")
    sub.add_parser("presets", help="list built-in presets")
    return parser


def _load(args) -> Experiment:
    if (args.config is None) == (args.preset is None):
        raise ConfigError("give exactly one of <config> or --preset")
    exp = load_preset(args.preset) if args.preset else load_experiment(args.config)
    return exp.with_overrides(seed=args.seed, n_runs=args.runs, directory=args.out)


def run_experiment(exp: Experiment, workers: int | None = None, quiet: bool = True) -> Path:
    out = Path(exp.output.directory or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    workers = exp.workers if workers is None else workers
    rc = exp.run
    if exp.meta.get("outside_theorem"):
        log.warning("preset %s lies outside the convergence theorem's hypotheses; "
                    "results are exploratory", exp.meta.get("name", "?"))
    results = run_many(rc, exp.n_runs, workers=workers)
    summary = summarize(results, rc, exp.dominance_threshold)
    formats = exp.output.formats
    emit_config(exp, out / "config.toml")
    if "summary" in formats:
        emit_summary(summary, out / "summary.toml", exp)
    if "csv" in formats:
        emit_timeseries(results[0], out / "timeseries.csv", exp.output.wealth_columns)
    if "dot" in formats:
        emit_graph_drawing(results[0], rc.graph, out / "graph.dot", svg="svg" in formats)
    elif "svg" in formats:
        emit_svg(results[0], rc.graph, out / "graph.svg")
    if not quiet:
        freqs = ", ".join(f"{v:.4f}" for v in summary.winner_frequencies)
        print(f"runs                 {summary.n_runs}")
        print(f"condensation_rate    {summary.condensation_rate:.4f}")
        print(f"independence_rate    {summary.independence_rate:.4f}")
        print(f"winner_frequencies   [{freqs}]")
        print(f"mean_cum_stake_sq    {summary.mean_cumulative_stake_sq:.6g} "
              f"+/- {summary.se_cumulative_stake_sq:.2g}")
        print(f"admissibility_viol.  {summary.total_admissibility_violations}")
        print(f"output               {out}")
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "presets":
        for name in preset_names():
            print(name)
        return EXIT_OK
    try:
        exp = _load(args)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers: must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_experiment(exp, workers=args.workers, quiet=args.quiet)
    except (RunError, PolicyContractError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
