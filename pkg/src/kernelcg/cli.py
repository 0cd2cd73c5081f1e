"""Command line entry point: ``kernelcg run|validate|audit <config.json>``."""

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigValidationError, hypothesis_warnings, load_config, validate_config
from .experiment import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, run_audit, run_experiment


def _parser():
    p = argparse.ArgumentParser(prog="kernelcg", description="Kernel CG simulation runner.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "run the experiment described by a config"),
        ("validate", "check a config and print it with defaults filled in"),
        ("audit", "run the concentration audits for a config's problem"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
        sp.add_argument("--out", default=None, help="output directory (overrides output_dir)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--quiet", action="store_true")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    err = lambda msg: print(msg, file=sys.stderr)
    try:
        if args.command == "validate":
            normalized, warns = validate_config(args.config)
            print(json.dumps(normalized, indent=2, sort_keys=True))
            for w in warns:
                err(f"warning: {w}")
            return EXIT_OK
        cfg = load_config(args.config)
    except ConfigValidationError as exc:
        for line in exc.errors:
            err(f"{args.config}: {line}")
        return EXIT_CONFIG
    except OSError as exc:
        err(f"{args.config}: {exc}")
        return EXIT_CONFIG
    if args.jobs < 1:
        err("--jobs must be at least 1")
        return EXIT_CONFIG

    if not args.quiet:
        for w in hypothesis_warnings(cfg):
            err(f"warning: {w}")
    try:
        if args.command == "audit":
            result = run_audit(cfg)
            if args.out is not None:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "audit.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
            if not args.quiet:
                print(json.dumps(result, indent=2, sort_keys=True))
            return EXIT_OK
        return run_experiment(cfg, out_dir=args.out, jobs=args.jobs, quiet=args.quiet, log=err)
    except Exception as exc:  # reported, not re-raised: the exit code carries it
        err(f"error: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
