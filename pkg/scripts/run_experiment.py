#!/usr/bin/env python3
"""Full experiment on the synthetic corpus: validate, evolve, analyze,
and build both ensemble reports. A few minutes at the default scale."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from moprune.cli import main as cli
from moprune.synthetic import make_desk_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("workdir", help="directory for data and results")
    parser.add_argument("--runs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=41)
    parser.add_argument("--max-evals", type=int, default=200)
    parser.add_argument("--population", type=int, default=30)
    args = parser.parse_args()

    work = Path(args.workdir)
    manifest = work / "corpus" / "manifest.txt"
    if not manifest.is_file():
        manifest = make_desk_corpus(work / "corpus")
        print(f"wrote {manifest}")

    out = work / "results"
    steps = [
        ["validate", str(manifest)],
        ["run", str(manifest), "--runs", str(args.runs),
         "--seed", str(args.seed), "--out", str(out),
         "--set", f"max_evals={args.max_evals}",
         "--set", f"population_size={args.population}"],
        ["analyze", str(out)],
        ["ensemble", str(out), "--metric", "accuracy"],
        ["ensemble", str(out), "--metric", "auroc"],
    ]
    for step in steps:
        print(f"$ moprune {' '.join(step)}")
        code = cli(step)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
