"""Command-line entry point: ``ngt <command> [--config FILE] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import harness
from .config import load_settings, make_settings
from .kernels import BACKEND

COMMANDS = ("train", "ablation", "sweep", "paramcount", "gradcheck", "aggregate", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ngt", description="Gated transformer laboratory.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("input", nargs="?",
                        help="CSV file for aggregate/report (per-run or summary form)")
    parser.add_argument("--config", help="key = value settings file")
    parser.add_argument("--profile", help="start from a named profile (toy, bert-large-cased)")
    parser.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--dump-gates", action="store_true",
                        help="save final-epoch validation gate tensors (train only)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _settings(args):
    settings = load_settings(args.config) if args.config else make_settings()
    if args.profile:
        if args.config:
            raise ValueError("use either --config or --profile (set profile inside the file)")
        settings = make_settings({"profile": args.profile})
    if args.seed is not None:
        settings = replace(settings, seeds=(args.seed,))
    return settings


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.dump_gates and args.command != "train":
        raise ValueError("--dump-gates only applies to train")
    cmd = args.command

    if cmd in ("aggregate", "report"):
        if not args.input:
            raise ValueError(f"{cmd} needs an input CSV")
        report = harness.cmd_aggregate(args.input, args.out)
        if cmd == "aggregate":
            sys.stdout.write(harness.summary_csv_text(report))
        else:
            sys.stdout.write(harness.render_table(report))
        return 0

    settings = _settings(args)
    if cmd == "paramcount":
        for name, count in harness.cmd_paramcount(settings).items():
            print(f"{name}\t{count}")
    elif cmd == "gradcheck":
        failed = False
        for name, rep in harness.cmd_gradcheck(seed=settings.seeds[0]).items():
            status = "PASS" if rep.passed else "FAIL"
            print(f"{status} {name}: max rel error {rep.max_error:.3e} "
                  f"over {sum(rep.coords.values())} coordinates (tol {rep.tolerance:g}, kernels {BACKEND})")
            failed |= not rep.passed
        return 1 if failed else 0
    elif cmd == "train":
        artifacts = harness.cmd_train(settings, args.out, args.dump_gates)
        for art in artifacts:
            best = art.record.best
            scores = " ".join(f"{k}={100 * v:.2f}" for k, v in best.items())
            print(f"seed {art.seed}: best epoch {art.record.best_epoch + 1} {scores}")
    elif cmd == "ablation":
        sys.stdout.write(harness.render_table(harness.cmd_ablation(settings, args.out)))
    elif cmd == "sweep":
        sys.stdout.write(harness.render_table(harness.cmd_sweep_positions(settings, args.out)))
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (ValueError, OSError) as exc:
        print(f"ngt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
