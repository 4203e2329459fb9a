"""Command line: ``ccndcc run`` and ``ccndcc validate``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .engine import InvariantViolation
from .experiment import emit_reports, gain_rows, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_OUTPUT = 0, 2, 3, 4
OUT_ENV = "CCNDCC_OUT"

log = logging.getLogger("ccndcc")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccndcc", description="CCN simulator with coded caching")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write CSV reports")
    r.add_argument("--config", help="scenario JSON (defaults built in when omitted)")
    r.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./results)")
    r.add_argument("--seeds", help="comma-separated seeds, e.g. 1,2,3")
    r.add_argument("--mode", choices=cfgmod.MODES, help="run one mode only")
    r.add_argument("--scenario", choices=cfgmod.SCENARIOS)
    r.add_argument("--workers", type=int)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("--config", required=True)
    return p


def _load(path: str | None) -> cfgmod.ScenarioConfig:
    if path is None:
        return cfgmod.ScenarioConfig()
    try:
        return cfgmod.load(path)
    except OSError as exc:
        raise cfgmod.ConfigError(f"{path}: {exc.strerror}") from None


def _apply_flags(cfg: cfgmod.ScenarioConfig, args) -> cfgmod.ScenarioConfig:
    changes = {}
    if args.seeds:
        try:
            changes["seeds"] = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise cfgmod.ConfigError(f"--seeds: not a list of integers: {args.seeds!r}") from None
        if not changes["seeds"] or min(changes["seeds"]) < 0:
            raise cfgmod.ConfigError("--seeds: need at least one seed >= 0")
    if args.mode:
        changes["modes"] = [args.mode]
    if args.scenario:
        changes["scenario"] = args.scenario
    if args.workers is not None:
        if args.workers < 1:
            raise cfgmod.ConfigError("--workers: must be >= 1")
        changes["workers"] = args.workers
    return replace(cfg, **changes)


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV) or "results")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PermissionError(f"{out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise PermissionError(f"{out}: not writable")
    return out


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config)
    except cfgmod.ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {args.config} (scenario {cfg.scenario}, {len(cfg.levels)} levels, K={cfg.K})")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = _apply_flags(_load(args.config), args)
    except cfgmod.ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = _out_dir(args.out)
    except PermissionError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    try:
        results = run_experiment(cfg)
    except (InvariantViolation, AssertionError) as exc:
        print(f"runtime assertion failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        # semantic problems only the simulator can see (e.g. topology shape)
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        paths = emit_reports(results, out)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    for row in gain_rows(results):
        print(f"{row['scenario']} lambda={row['lambda']} cs={row['cs_size']} {row['policy']}: "
              f"throughput x{row['throughput_gain']:.3f}, server coding gain {row['coding_gain']:.3f}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate":
        return cmd_validate(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
