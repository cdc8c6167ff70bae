"""``lamc run`` and ``lamc sweep`` command-line entry points."""

from __future__ import annotations

import argparse
import logging
import sys

from .exceptions import LamcError
from .harness import (
    SyntheticSpec,
    emit_report,
    format_table,
    load_config,
    run_experiment,
    sweep_calibration_size,
)


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _cap(text):
    return None if text.lower() == "all" else int(text)


def _caps(text):
    return [_cap(c.strip()) for c in text.split(",") if c.strip()]


def _add_common(p):
    p.add_argument("--config", help="flat 'key = value' config file")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--dataset", help="dense CSV dataset (first line '#labels=K')")
    src.add_argument("--synthetic", type=SyntheticSpec.parse, metavar="N,D,K,CARD,NOISE")
    p.add_argument("--alpha", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-grid", type=_floats, metavar="LR,LR,...")
    p.add_argument("--runs", type=int, dest="n_runs")
    p.add_argument("--seed", type=int)
    p.add_argument("--cal-per-label", type=_cap, metavar="N|all")
    p.add_argument("--loss", choices=("wan", "an", "bce"))
    p.add_argument("--protocol", choices=("same-split", "paper"))
    p.add_argument("--out", help="output directory for the report files")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lamc",
        description="Single-positive multi-label training with class-wise conformal label filtering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="multi-seed experiment: unfiltered vs LAMC"))
    sw = sub.add_parser("sweep", help="vary the per-label calibration size")
    _add_common(sw)
    sw.add_argument("--caps", type=_caps, default=[1, 5, 10, 25, None], metavar="1,5,10,all")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        key: getattr(args, key)
        for key in ("dataset", "synthetic", "alpha", "epochs", "batch_size", "lr_grid",
                    "n_runs", "seed", "cal_per_label", "loss", "protocol", "out")
    }
    try:
        cfg = load_config(args.config, **overrides)
        if args.command == "run":
            report = run_experiment(cfg)
        else:
            report = sweep_calibration_size(cfg, args.caps)
        sys.stdout.write(format_table(report))
        if cfg.out:
            for path in emit_report(report, cfg.out):
                print(f"wrote {path}", file=sys.stderr)
    except (LamcError, OSError) as e:
        print(f"lamc: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
