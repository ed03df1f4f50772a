"""Command-line entry point: ``robustpost {simulate,table,boxplot,verify}``.

Exit codes: 0 success, 1 usage or configuration error, 2 a verification
check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import simulation as sim

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2


class ConfigError(Exception):
    pass


def _key_lines(text: str) -> dict:
    """1-based line of every top-level key in a YAML mapping document."""
    node = yaml.compose(text)
    if node is None:
        return {}
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"line {node.start_mark.line + 1}: config must be a mapping of keys to values")
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def load_config(path, preset: str | None = None, overrides: dict | None = None) -> sim.SimulationConfig:
    """Read a YAML simulation config; errors name the offending line."""
    base = dict(sim.PRESETS[preset]) if preset else {}
    data = {}
    lines = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            lines = _key_lines(text)
            data = yaml.safe_load(text) or {}
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark or exc.context_mark
            where = f"line {mark.line + 1}: " if mark else ""
            raise ConfigError(f"{path}: {where}{exc.problem or exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping of keys to values")
    merged = {**base, **data, **(overrides or {})}
    try:
        return sim.SimulationConfig.from_dict(merged)
    except sim.ConfigValueError as exc:
        line = next((n for k, n in lines.items() if sim.CONFIG_ALIASES.get(k, k) == exc.field or k == exc.field),
                    None)
        where = f"line {line}: " if line else ""
        raise ConfigError(f"{path or 'config'}: {where}{exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


def _simulate(args) -> int:
    overrides = {}
    if args.reps is not None:
        overrides["n_reps"] = args.reps
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.config is None and args.preset is None:
        raise ConfigError("give --config FILE or --preset NAME")
    cfg = load_config(args.config, args.preset, overrides)
    records = sim.run_experiment(cfg, args.out, progress=not args.quiet)
    rows = sim.mse_table(records, cfg.i_max)
    sim.write_mse_csv(rows, Path(args.out) / "mse_table.csv")
    if not args.quiet:
        print(sim.format_mse_table(rows))
    return EXIT_OK


def _records(path):
    records = sim.read_records(path)
    if not records:
        raise ConfigError(f"no records found in {path}")
    return records


def _table(args) -> int:
    rows = sim.mse_table(_records(args.inp), args.i_max)
    out = Path(args.csv) if args.csv else Path(args.inp) / "mse_table.csv"
    sim.write_mse_csv(rows, out)
    print(sim.format_mse_table(rows))
    return EXIT_OK


def _boxplot(args) -> int:
    rows = sim.boxplot_export(_records(args.inp))
    out = Path(args.csv) if args.csv else Path(args.inp) / "boxplot.csv"
    summary = out.with_name(out.stem + "_summary.csv")
    sim.write_boxplot_csv(rows, out, summary)
    print(f"wrote {len(rows)} rows to {out} and a summary to {summary}")
    return EXIT_OK


def _verify(args) -> int:
    from .verify import run_checks

    results = run_checks(quick=args.quick)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<40} {r.detail}  ({r.seconds:.1f}s)")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robustpost", description="Robustified posterior simulation study.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress details")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run (or resume) a replicated experiment")
    s.add_argument("--config", help="YAML config file")
    s.add_argument("--preset", choices=sorted(sim.PRESETS), help="start from a preset; config keys override it")
    s.add_argument("--out", required=True, help="results directory")
    s.add_argument("--reps", type=int, help="number of replications (e.g. 100 for full scale)")
    s.add_argument("--workers", type=int, help="replication worker processes")
    s.add_argument("--seed", type=int, help="base seed")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=_simulate)

    t = sub.add_parser("table", help="MSE table from saved records")
    t.add_argument("--in", dest="inp", required=True, help="results directory or records file")
    t.add_argument("--i-max", type=int, default=3)
    t.add_argument("--csv", help="output CSV (default: <in>/mse_table.csv)")
    t.set_defaults(func=_table)

    b = sub.add_parser("boxplot", help="extreme-effect errors for box plots")
    b.add_argument("--in", dest="inp", required=True, help="results directory or records file")
    b.add_argument("--csv", help="output CSV (default: <in>/boxplot.csv)")
    b.set_defaults(func=_boxplot)

    v = sub.add_parser("verify", help="run the built-in numerical checks")
    v.add_argument("--quick", action="store_true", help="shorter chains")
    v.set_defaults(func=_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
