"""Exporter CLI.

    ptns-export prompt --ckpt PATH --task ID --seed S --step K --out DIR
    ptns-export semb   --data PATH --encoder ID --task ID --out DIR

A leading ``export`` token is accepted and ignored, so the documented
``export prompt ...`` / ``export semb ...`` spellings work verbatim via
``python -m promptexport export prompt ...``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoints import DEFAULT_TENSOR_PATTERN
from .encoders import get_encoder
from .errors import ExportError
from .exporter import DEFAULT_BATCH_SIZE, ExportJob, export_prompt, export_semb


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptns-export",
        description="Convert soft-prompt checkpoints and text datasets into PTNS artifacts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prompt", help="extract a prompt weight matrix from a checkpoint")
    p.add_argument("--ckpt", type=Path, required=True, help="checkpoint (.pt/.pth/.bin/.npz)")
    p.add_argument("--task", required=True, help="task id for the tensor header")
    p.add_argument("--seed", type=int, required=True, help="training seed")
    p.add_argument("--step", type=int, required=True, help="training step")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument(
        "--tensor-pattern",
        default=DEFAULT_TENSOR_PATTERN,
        help="regex for the prompt tensor name (default matches common prompt-tuning names)",
    )

    p = sub.add_parser("semb", help="mean sentence vector over a text dataset")
    p.add_argument("--data", type=Path, required=True, help="dataset (.txt lines or .jsonl)")
    p.add_argument(
        "--encoder", required=True, help="encoder spec: stub[:dim] or sbert:<model>"
    )
    p.add_argument("--task", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "export":
        argv = argv[1:]
    args = build_parser().parse_args(argv)
    try:
        if args.command == "prompt":
            job = ExportJob(
                input_path=args.ckpt,
                task_id=args.task,
                output_dir=args.out,
                kind="prompt",
                seed=args.seed,
                step=args.step,
            )
            tensor_path, fragment = export_prompt(job, args.tensor_pattern)
        else:
            job = ExportJob(
                input_path=args.data,
                task_id=args.task,
                output_dir=args.out,
                kind="semb",
            )
            tensor_path, fragment = export_semb(
                job, get_encoder(args.encoder), args.batch_size
            )
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {tensor_path}")
    print(f"updated {fragment}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
