"""Command-line interface: ``radvi run``, ``radvi sweep``, ``radvi validate``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .basis import ConfigurationError
from .config import PRESETS, ConfigError, RunConfig, is_slow, load_config, preset
from .runner import OUTPUT_ENV, run, sweep
from .validation import run_checks

EXIT_OK, EXIT_RUN_FAILURE, EXIT_CONFIG = 0, 1, 2


def _load(source: str, overrides: List[str]) -> RunConfig:
    if source in PRESETS:
        return preset(source, overrides)
    if not os.path.exists(source):
        raise ConfigError(f"{source!r} is neither a config file nor a preset name (see `radvi presets`)")
    return load_config(source, overrides)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radvi", description="Radial variational inference experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a config file or preset")
    r.add_argument("config", help="INI file or preset name")
    r.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    r.add_argument("--output", type=Path, help=f"output directory (default ${OUTPUT_ENV}/<name>)")
    r.add_argument("--timing", action="store_true", help="add wallclock_ms to trace.csv")
    r.add_argument("--samples", action="store_true", help="also write samples.csv")
    r.add_argument("--dump-q", type=Path, metavar="CSV", help="write the Gram matrix to CSV")

    s = sub.add_parser("sweep", help="one run per value of a config parameter")
    s.add_argument("config", help="INI file or preset name")
    s.add_argument("--param", required=True, help="dotted key, e.g. dictionary.alpha")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    s.add_argument("--output", type=Path)
    s.add_argument("--timing", action="store_true")

    v = sub.add_parser("validate", help="run the fast numerical self-checks")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--corrupt-q", action="store_true", help=argparse.SUPPRESS)

    pr = sub.add_parser("presets", help="list shipped presets")
    pr.add_argument("--show", metavar="NAME", help="print a preset as INI")
    return p


def _cmd_run(args) -> int:
    cfg = _load(args.config, args.overrides)
    outcome = run(cfg, args.output, timing=args.timing, samples=args.samples or None, dump_q=args.dump_q)
    print(f"wrote {outcome.output_dir}")
    for m in outcome.metrics:
        se = "" if m.standard_error is None else f" ± {m.standard_error:.2e}"
        print(f"  {m.name:<28} {m.value:.6g}{se}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args.config, args.overrides)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    status = sweep(cfg, args.param, values, args.output, timing=args.timing)
    for item in status:
        flag = "ok" if item["ok"] else f"FAILED ({item['error']})"
        print(f"  {args.param}={item['value']}: {flag}")
    return EXIT_OK if all(item["ok"] for item in status) else EXIT_RUN_FAILURE


def _cmd_validate(args) -> int:
    results = run_checks(args.seed, corrupt_q=args.corrupt_q)
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'}  {res.name:<28} {res.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUN_FAILURE


def _cmd_presets(args) -> int:
    if args.show:
        print(preset(args.show).to_ini(), end="")
        return EXIT_OK
    for name in sorted(PRESETS):
        print(f"{name}{'  (slow)' if is_slow(name) else ''}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate, "presets": _cmd_presets}
    try:
        return handlers[args.command](args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
