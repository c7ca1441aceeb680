#!/usr/bin/env python3
"""Generate a synthetic feature corpus plus run manifest.

The InD classes sit on well-separated Gaussian blobs; the OoD set reuses
the same blobs with every center shifted radially toward the origin, which
trained heads score with near-uniform confidence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from moprune.synthetic import make_desk_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", help="directory for the FEATSET files")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--feature-dim", type=int, default=64)
    parser.add_argument("--classes", type=int, default=3)
    parser.add_argument("--train", type=int, default=300)
    parser.add_argument("--test", type=int, default=150)
    parser.add_argument("--class-distance", type=float, default=6.0,
                        help="pairwise distance between class centers")
    parser.add_argument("--ood-shift", type=float, default=10.0,
                        help="radial shift applied to the OoD centers")
    args = parser.parse_args()
    manifest = make_desk_corpus(
        args.out_dir,
        seed=args.seed,
        feature_dim=args.feature_dim,
        num_classes=args.classes,
        n_train=args.train,
        n_test=args.test,
        pairwise_distance=args.class_distance,
        ood_shift=args.ood_shift,
    )
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
