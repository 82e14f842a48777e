"""Command-line entry point: run, verify, bench, report"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence
import pandas as pd
from pydantic import ValidationError
from dsmin import __version__
from dsmin.core.config import settings
from dsmin.core.errors import ConfigError, DSMinError
from dsmin.core.logger import configure, logger
from dsmin.models.schemas import ExperimentConfig, ExperimentSummary
from dsmin.services.harness import experiment_service
from dsmin.services.lovasz import greedy_subgradient
from dsmin.services.verify import GreedyFn, run_verify

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNINGS = 2


def parse_value(raw: str) -> Any:
    """JSON literal if it parses, a list for comma-separated input, else the raw string"""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    if "," in raw:
        return [parse_value(part.strip()) for part in raw.split(",") if part.strip()]
    return raw


def apply_override(data: Dict[str, Any], assignment: str) -> None:
    """Apply one dotted KEY=VALUE override in place"""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} is not of the form KEY=VALUE")
    *parents, leaf = key.strip().split(".")
    node = data
    for part in parents:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override {key!r}: {part!r} is not a section")
        node = child
    value = parse_value(raw.strip())
    if isinstance(node.get(leaf), list) and not isinstance(value, list):
        value = [value]
    node[leaf] = value


def load_config(path: Optional[str], overrides: Sequence[str]) -> ExperimentConfig:
    """
    Parse an experiment config file and apply overrides
    
    Args:
        path: JSON file, or None for the defaults
        overrides: KEY=VALUE strings applied after the file is parsed
    
    Returns:
        Validated ExperimentConfig; unknown keys raise ConfigError
    """
    if path is None:
        data = ExperimentConfig().model_dump(mode="json")
    else:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        data = {**ExperimentConfig().model_dump(mode="json"), **data}
    for assignment in overrides:
        apply_override(data, assignment)
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e


def summary_table(summary: ExperimentSummary) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "method": s.method,
                "iterations": s.iterations,
                "best_F": s.best_final_value,
                "cells": s.cells,
                "failed": s.failed_cells,
                "uncertified": s.uncertified_cells,
            }
            for s in summary.methods
        ],
        columns=["method", "iterations", "best_F", "cells", "failed", "uncertified"],
    )


def output_root(args: argparse.Namespace) -> Path:
    return Path(settings.DSMIN_OUT or args.out)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seeds": [args.seed]})
    result = experiment_service.run_experiment(cfg, out_dir=output_root(args), workers=args.workers)
    print(summary_table(result.summary).to_string(index=False))
    for note in result.summary.notes:
        print(f"note: {note}")
    print(f"traces written to {result.out_dir}")
    if result.failed or result.uncertified:
        logger.warning(f"{result.failed} failed and {result.uncertified} uncertified cells")
        return EXIT_WARNINGS
    return EXIT_OK


def cmd_verify(level: str, seed: int = 0, greedy: GreedyFn = greedy_subgradient) -> int:
    report = run_verify(level, seed, greedy)
    for r in report.results:
        status = "ok" if r.passed else "FAIL"
        print(f"{status:4} {r.name} ({r.cases} cases)")
        if not r.passed:
            print(f"     witness: {r.witness}")
    if report.failures:
        print(f"{len(report.failures)} of {len(report.results)} checks failed")
    return EXIT_OK if report.passed else EXIT_ERROR


def cmd_bench(args: argparse.Namespace) -> int:
    seeds = [args.seed] if args.seed is not None else None
    table = experiment_service.bench(d=args.d, seeds=seeds, workers=args.workers or 1, out_dir=args.bench_out)
    print(table.to_string(index=False))
    return EXIT_OK if int(table["failed"].sum()) == 0 else EXIT_WARNINGS


def cmd_report(trace_dir: str) -> int:
    summary = experiment_service.report(trace_dir)
    print(summary_table(summary).to_string(index=False))
    return EXIT_OK


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsmin", description="Difference-of-submodular minimization experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (LOG_LEVEL by default)")
    sub = parser.add_subparsers(dest="command", required=True)
    
    run = sub.add_parser("run", help="Run an experiment sweep")
    run.add_argument("--config", help="Experiment config (JSON)")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="Override a config key (dotted for nested keys, repeatable)")
    run.add_argument("--out", default="out", help="Output root (DSMIN_OUT takes precedence)")
    run.add_argument("--workers", type=int, default=None, help="Concurrent experiment cells")
    run.add_argument("--seed", type=int, default=None, help="Run a single seed")
    
    verify = sub.add_parser("verify", help="Run the oracle-backed invariant suite")
    verify.add_argument("--level", choices=["fast", "full"], default="fast")
    verify.add_argument("--seed", type=int, default=0)
    
    bench = sub.add_parser("bench", help="Time every method on synthetic speech instances")
    bench.add_argument("--d", type=int, default=50, help="Number of utterances")
    bench.add_argument("--workers", type=int, default=None)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--out", dest="bench_out", default=None, help="Also write traces here")
    
    report = sub.add_parser("report", help="Rebuild summary and plot data from stored traces")
    report.add_argument("trace_dir", help="Directory holding <method>-<rho>-<seed>.jsonl traces")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = create_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK
    try:
        configure(args.log_level)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "verify":
            return cmd_verify(args.level, args.seed)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_report(args.trace_dir)
    except DSMinError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
