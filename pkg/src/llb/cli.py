"""Command-line entry point ``llb``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, load_config, validate
from .experiments import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_FAILED,
    EXIT_OK,
    MissingData,
    execute_run,
    execute_stability,
    execute_sweep,
    execute_verify,
    resolve_out,
)
from .solver import StepDiverged

COMMANDS = ("solve", "verify", "sweep-smallness", "blowup-watch", "stability", "plot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llb", description="LLB spectral solver and inequality lab")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("run_dir", nargs="?", help="run directory (plot only)")
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="override the configuration seed")
    parser.add_argument("--workers", type=int, help="sweep worker processes")
    parser.add_argument("--suite", action="append", help="verify: run only this suite (repeatable)")
    return parser


def _fail(msg: str, code: int) -> int:
    print(f"llb: {msg}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "plot":
        from .plotting import plot_run

        target = args.run_dir or args.out
        if target is None:
            return _fail("plot needs a run directory", EXIT_CONFIG)
        try:
            for path in plot_run(target):
                print(path)
        except MissingData as exc:
            return _fail(str(exc), EXIT_CONFIG)
        return EXIT_OK

    if args.config is None:
        return _fail("--config is required", EXIT_CONFIG)
    try:
        cfg = load_config(args.config)
        kind = args.command
        if cfg.kind != kind and not (kind == "blowup-watch" and cfg.kind == "solve"):
            raise ConfigError(f"kind: config is for {cfg.kind!r}, command is {kind!r}")
        if args.seed is not None:
            cfg = validate(replace(cfg, seed=args.seed))
        if args.suite:
            cfg = validate(replace(cfg, verify=replace(cfg.verify, suites=args.suite)))
        if kind == "blowup-watch":
            cfg = replace(cfg, monitors=replace(cfg.monitors, blowup=True))
        out = resolve_out(cfg, args.out, args.config)

        if kind in ("solve", "blowup-watch"):
            result = execute_run(cfg, out, resume=args.resume)
            print(out)
            if result.diverged:
                return _fail(result.message, EXIT_DIVERGED)
            return EXIT_OK
        if kind == "verify":
            verdicts = execute_verify(cfg, out)
            print(out / "verdicts.jsonl")
            ok = all(v["passed"] and v.get("stable", True) for v in verdicts)
            return EXIT_OK if ok else EXIT_FAILED
        if kind == "sweep-smallness":
            execute_sweep(cfg, out, args.workers)
            print(out / "sweep.csv")
            return EXIT_OK
        summary = execute_stability(cfg, out)
        print(out / "stability.csv")
        return EXIT_OK if summary["within_bound"] else EXIT_FAILED
    except ConfigError as exc:
        return _fail(f"config error: {exc}", EXIT_CONFIG)
    except StepDiverged as exc:
        return _fail(str(exc), EXIT_DIVERGED)


if __name__ == "__main__":
    sys.exit(main())
