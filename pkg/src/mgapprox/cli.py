"""Command-line entry point: ``mgapprox run <config>`` and ``mgapprox report <dir>``."""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mgapprox",
                                description="Martingale approximation experiments for causal processes.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the checks of a config file and write CSV reports")
    r.add_argument("config", help="experiment config (key = value text)")
    r.add_argument("--seed", type=_u64, default=None, help="override the config's root seed")
    r.add_argument("--jobs", type=_positive, default=1,
                   help="worker threads; never changes the output bytes")
    s = sub.add_parser("report", help="summarize the reports in a directory")
    s.add_argument("directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        from .runner import run
        try:
            paths = run(args.config, seed=args.seed, jobs=args.jobs)
        except ConfigError as exc:
            print(f"mgapprox: config error: {exc}", file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"mgapprox: {exc}", file=sys.stderr)
            return 2
        for p in paths:
            print(p)
        return 0
    from .report import summarize
    try:
        text, code = summarize(args.directory)
    except (OSError, ValueError) as exc:
        print(f"mgapprox: {exc}", file=sys.stderr)
        return 2
    print(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
