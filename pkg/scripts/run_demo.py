#!/usr/bin/env python3
"""End-to-end demo: synthetic workspace -> validate -> rank -> eval -> report.

Writes everything under ./demo_run (override with --dir) and prints the
rendered leaderboard when done.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from taskrank import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", type=Path, default=Path("demo_run"))
    parser.add_argument("--noise", type=float, default=0.05)
    parser.add_argument("--trials", type=int, default=2000)
    args = parser.parse_args()

    ws = args.dir / "workspace"
    steps = [
        ["export-fixture", "--out", str(ws), "--noise", str(args.noise)],
        ["validate", "--config", str(ws / "config.json")],
        ["rank", "--config", str(ws / "config.json")],
        ["eval", "--config", str(ws / "config.json"), "--trials", str(args.trials)],
        ["report", "--config", str(ws / "config.json"), "--plot-data"],
    ]
    for argv in steps:
        print(f"$ taskrank {' '.join(argv)}")
        rc = cli.main(argv)
        if rc != 0:
            return rc
    print()
    print((ws / "out" / "report.md").read_text())
    return 0


if __name__ == "__main__":
    sys.exit(main())
