"""telkit command line: synth, train, infer, propose, eval, diagnose, selfsim."""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .data import DataError
from .metrics import parse_iou_grid
from .training import TrainingError


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; omitted keys keep their defaults")
    p.add_argument("--seed", type=int, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="telkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("train", help="train scorer and detector on a dataset")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="dataset directory from `telkit synth`")
    p.add_argument("--out", required=True, help="directory for checkpoint.tkw and curve.csv")

    p = sub.add_parser("infer", help="run detection on a split")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", required=True, help="detections JSON path")

    p = sub.add_parser("propose", help="write scored proposals for a split")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", required=True, help="proposals JSON path")

    p = sub.add_parser("eval", help="score detections against annotations")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--iou", default="0.3:0.7:0.1", help="threshold grid start:stop:step")
    p.add_argument("--out", required=True, help="directory for eval.json and eval.txt")

    p = sub.add_parser("diagnose", help="classify false positives and estimate their impact")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--iou", default="0.3:0.7:0.1", help="grid used for impact deltas")
    p.add_argument("--impact-mode", choices=("delete", "correct"), default="delete")
    p.add_argument("--out", required=True, help="directory for diagnosis outputs")

    p = sub.add_parser("selfsim", help="measure instance self-similarity of a feature set")
    p.add_argument("--annotations", required=True)
    p.add_argument("--features", required=True, help="directory of .tff files")
    p.add_argument("--out", required=True, help="directory for selfsim.json and selfsim.txt")

    return parser


def _run(args: argparse.Namespace) -> None:
    if args.command == "synth":
        config = pipeline.load_run_config(args.config, args.seed)
        pipeline.cmd_synth(config, args.out)
    elif args.command == "train":
        config = pipeline.load_run_config(args.config, args.seed)
        pipeline.cmd_train(config, args.data, args.out)
    elif args.command == "infer":
        config = pipeline.load_run_config(args.config, args.seed)
        pipeline.cmd_infer(config, args.checkpoint, args.data, args.out, split=args.split)
    elif args.command == "propose":
        config = pipeline.load_run_config(args.config, args.seed)
        pipeline.cmd_propose(config, args.checkpoint, args.data, args.out, split=args.split)
    elif args.command == "eval":
        report = pipeline.cmd_eval(
            args.detections, args.annotations, args.out, alphas=parse_iou_grid(args.iou)
        )
        print(report.to_text(), end="")
    elif args.command == "diagnose":
        pipeline.cmd_diagnose(
            args.detections, args.annotations, args.out,
            alpha=args.alpha, alphas=parse_iou_grid(args.iou), impact_mode=args.impact_mode,
        )
    elif args.command == "selfsim":
        report = pipeline.cmd_selfsim(args.annotations, args.features, args.out)
        print(f"average self-similarity std: {report.average_std:.4f}")
    else:  # pragma: no cover - argparse rejects unknown commands first
        raise AssertionError(args.command)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _run(args)
    except (DataError, TrainingError, ValueError, OSError) as e:
        print(f"telkit {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
