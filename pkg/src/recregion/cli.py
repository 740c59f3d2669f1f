"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 input parse error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from contextlib import contextmanager
from typing import Sequence

from . import harness
from .errors import DegenerateVariance, DomainError, InvalidConfig, NonFiniteState, NotPositiveDefinite, ParseError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="flat key = value experiment file")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="overrides the config seed")
    p.add_argument("--out", metavar="PATH", help="output file (default: config 'out', else stdout)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="recregion", description="Streaming estimation and confidence regions for Markov chains.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="write a simulated chain as step,z CSV")
    for name, text in (("estimate", "per-step estimates CSV"), ("region", "per-step confidence regions JSONL")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("chain", help="chain CSV with header step,z")
        if name == "region":
            p.add_argument("--stride", type=int, default=1, help="emit every STRIDE transitions")
            p.add_argument("--no-truth", action="store_true", help="omit contains_true")
    for name in ("coverage", "rate", "normality"):
        p = sub.add_parser(name, parents=[common], help=f"{name} Monte Carlo report")
        p.add_argument("--diagnostics", action="store_true", help="append asymptotic diagnostics")
    sub.add_parser("clt", parents=[common], help="score-sum CLT Monte Carlo report")
    p = sub.add_parser("ergodic", parents=[common], help="path averages of the log density on one chain")
    p.add_argument("--grid", help="'mu,sigma;mu,sigma;...' (default: truth and four neighbours)")
    return parser


@contextmanager
def _output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _run(args) -> None:
    cfg = harness.load_config(args.config, seed=args.seed)
    out_path = args.out if args.out is not None else cfg.out
    cmd = args.command
    if cmd == "simulate":
        text = harness.render_chain(cfg)
        with _output(out_path) as fh:
            fh.write(text)
        return
    if cmd in ("estimate", "region"):
        z = harness.read_chain(args.chain)
        with _output(out_path) as fh:
            if cmd == "estimate":
                harness.write_estimates(cfg, z, fh)
            else:
                harness.write_regions(cfg, z, fh, stride=args.stride, with_truth=not args.no_truth)
        return
    if cmd == "coverage":
        report = harness.coverage_report(cfg, diagnostics=args.diagnostics)
    elif cmd == "rate":
        report = harness.rate_report(cfg, diagnostics=args.diagnostics)
    elif cmd == "normality":
        report = harness.normality_report(cfg, diagnostics=args.diagnostics)
    elif cmd == "clt":
        report = harness.clt_report(cfg)
    else:
        grid = harness.parse_grid(args.grid) if args.grid else None
        report = harness.ergodic_report(cfg, grid)
    with _output(out_path) as fh:
        fh.write(harness.dumps_report(report))


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _run(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotPositiveDefinite, NonFiniteState, DegenerateVariance, DomainError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
