"""Command-line entry point: ``avcc run | compare | gen-data``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import SCHEMA, ExperimentConfig, env_name
from .data import synthetic_blobs, write_csv
from .errors import AVCCError, ConfigError
from .experiment import compare_runs, format_table, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def parse_overrides(extra: list[str]) -> dict:
    """Turn ``--scheme.N=12`` / ``--scheme.N 12`` leftovers into a dict."""
    out = {}
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--"):
            raise ConfigError("argv", f"unexpected argument {arg!r}")
        key, eq, value = arg[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise ConfigError(key, "missing value")
            i += 1
            value = extra[i]
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        out[key] = value
        i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avcc", description="Adaptive verifiable coded computing experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="train one configuration and write a metrics CSV",
                         epilog="Any config key can be overridden as --key=value, e.g. --scheme.N=12. "
                                f"Environment overrides use {env_name('scheme.N')}-style names.")
    run.add_argument("-c", "--config", help="key=value config file")
    run.add_argument("--print-config", action="store_true",
                     help="print the resolved config and exit")

    cmp_ = sub.add_parser("compare", help="compare metric files; the first is the reference")
    cmp_.add_argument("files", nargs="+")

    gen = sub.add_parser("gen-data", help="write a synthetic two-class dataset CSV")
    gen.add_argument("output")
    gen.add_argument("--m", type=int, default=1200)
    gen.add_argument("--d", type=int, default=50)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--separation", type=float, default=2.5)
    gen.add_argument("--header", action="store_true")
    gen.add_argument("--test-output", help="also write a held-out split of --test-m rows here")
    gen.add_argument("--test-m", type=int, default=400)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and args.verb != "run":
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "run":
            cfg = ExperimentConfig.load(args.config, overrides=parse_overrides(extra))
            if args.print_config:
                sys.stdout.write(cfg.dumps())
                return EXIT_OK
            run_experiment(cfg, out=sys.stdout)
            print(f"metrics written to {cfg['output']}")
        elif args.verb == "compare":
            print(format_table(compare_runs(args.files)))
        else:
            train, test = synthetic_blobs(args.m, args.d, args.seed, args.separation, args.test_m)
            write_csv(args.output, train, header=args.header)
            if args.test_output:
                write_csv(args.test_output, test, header=args.header)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AVCCError, OSError, ValueError) as exc:
        print(f"aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
