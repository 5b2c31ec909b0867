"""Command-line front door.

Subcommands: validate, rank, eval, report, export-fixture. Every RunConfig
field can come from a JSON config file (--config) and be overridden by a
flag. Exit codes: 0 success, 2 validation failure, 3 runtime data error,
4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .errors import ConfigError, InvariantViolation, MissingMetrics, TaskRankError
from .fixture import FixtureSpec, generate_fixture

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def _int_or_keyword(keyword: str):
    def parse(value: str):
        return keyword if value == keyword else int(value)

    return parse


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration file")
    p.add_argument("--manifest", type=Path, help="manifest path override")
    p.add_argument("--table", type=Path, help="transfer table path override")
    p.add_argument(
        "--methods",
        help="comma-separated methods (random,size,semb:<enc>,feature,unigram,max)",
    )
    p.add_argument(
        "--step",
        type=_int_or_keyword("latest"),
        help="checkpoint step to embed from, or 'latest'",
    )
    p.add_argument(
        "--prompt-seed",
        type=_int_or_keyword("lowest"),
        help="prompt-tuning seed to embed from, or 'lowest'",
    )
    p.add_argument(
        "--transfer-seed",
        type=_int_or_keyword("mean"),
        help="transfer seed to score against, or 'mean' over seeds",
    )
    p.add_argument("--k", help="comma-separated k values for Regret@k / top-k gains")
    p.add_argument(
        "--p", type=_int_or_keyword("all"), help="ranking depth for nDCG, or 'all'"
    )
    p.add_argument("--trials", type=int, help="Monte Carlo trials for the random baseline")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument(
        "--workers", type=int, help=f"worker threads (default: ${pipeline.THREADS_ENV} or CPU count)"
    )


def _build_config(args: argparse.Namespace) -> pipeline.RunConfig:
    if args.config is not None:
        config = pipeline.RunConfig.from_file(args.config)
    else:
        if args.manifest is None or args.table is None or args.methods is None:
            raise ConfigError(
                "without --config, all of --manifest, --table and --methods are required"
            )
        config = pipeline.RunConfig(
            manifest_path=args.manifest,
            transfer_table_path=args.table,
            methods=tuple(args.methods.split(",")),
        )
    overrides = {}
    if args.manifest is not None:
        overrides["manifest_path"] = args.manifest
    if args.table is not None:
        overrides["transfer_table_path"] = args.table
    if args.methods is not None:
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(","))
    if args.step is not None:
        overrides["checkpoint_step"] = args.step
    if args.prompt_seed is not None:
        overrides["prompt_seed_policy"] = args.prompt_seed
    if args.transfer_seed is not None:
        overrides["transfer_seed_policy"] = args.transfer_seed
    if args.k is not None:
        overrides["k_values"] = tuple(int(k) for k in args.k.split(","))
    if args.p is not None:
        overrides["p"] = args.p
    if args.trials is not None:
        overrides["monte_carlo_trials"] = args.trials
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    return config.replace(**overrides) if overrides else config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskrank",
        description="Rank candidate source tasks per target and score the predictions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (
        ("validate", "cross-check manifest, artifacts and transfer table"),
        ("rank", "write predicted rankings per (target, method)"),
        ("eval", "score rankings against ground truth and write reports"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_config_flags(p)

    p = sub.add_parser("report", help="render a human-readable summary from metrics.json")
    _add_config_flags(p)
    p.add_argument(
        "--plot-data",
        action="store_true",
        help="also emit per-target method,ndcg CSVs under plots/",
    )

    p = sub.add_parser(
        "export-fixture", help="generate the synthetic planted-structure workspace"
    )
    p.add_argument("--out", type=Path, required=True, help="workspace directory")
    p.add_argument("--sources", type=int, default=13)
    p.add_argument("--targets", type=int, default=10)
    p.add_argument("--rows", type=int, default=100, help="prompt tokens per matrix")
    p.add_argument("--cols", type=int, default=768, help="feature dimensions")
    p.add_argument("--noise", type=float, default=0.0, help="noise as fraction of token norm")
    p.add_argument("--seed", type=int, default=0xF1D0)
    p.add_argument("--step", type=int, default=30000)
    return parser


def _cmd_validate(args) -> int:
    config = _build_config(args)
    problems, summary = pipeline.run_validate(config)
    if problems:
        for problem in problems:
            print(f"FAIL: {problem}", file=sys.stderr)
        print(f"{len(problems)} problem(s) found", file=sys.stderr)
        return EXIT_VALIDATION
    print(summary)
    return EXIT_OK


def _cmd_rank(args) -> int:
    config = _build_config(args)
    path = pipeline.run_rank(config, args.workers)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = _build_config(args)
    pipeline.run_eval(config, args.workers)
    out = Path(config.output_dir)
    for name in ("rankings.json", "metrics.json", "summary.csv", "gains.csv"):
        print(f"wrote {out / name}")
    return EXIT_OK


def _cmd_report(args) -> int:
    config = _build_config(args)
    path = pipeline.run_report(config, plot_data=args.plot_data)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_export_fixture(args) -> int:
    spec = FixtureSpec(
        out_dir=args.out,
        n_sources=args.sources,
        n_targets=args.targets,
        rows=args.rows,
        cols=args.cols,
        noise=args.noise,
        seed=args.seed,
        step=args.step,
    )
    meta = generate_fixture(spec)
    config = pipeline.RunConfig(
        manifest_path=Path("manifest.json"),
        transfer_table_path=Path("transfer.csv"),
        methods=("random", "size", "semb:stub", "feature", "unigram", "max"),
        output_dir=Path("out"),
    )
    (args.out / "config.json").write_text(
        json.dumps(config.to_json_dict(), indent=2, sort_keys=True) + "\n", "utf-8"
    )
    print(
        f"wrote fixture with {meta['n_sources']} sources, {meta['n_targets']} targets "
        f"under {args.out}"
    )
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "rank": _cmd_rank,
    "eval": _cmd_eval,
    "report": _cmd_report,
    "export-fixture": _cmd_export_fixture,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, MissingMetrics) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except TaskRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything unplanned is an internal breach
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
