"""Command-line surface: `featx extract` and `featx manifest`.

Exit codes: 0 success, 1 invalid input, 2 unexpected runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from .backbone import BackboneError
from .extract import (
    ExtractError,
    ExtractionJob,
    ManifestError,
    emit_manifest,
    run_extraction,
)
from .featwrite import FeatsetWriteError
from .folders import FolderError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_USER_ERRORS = (
    BackboneError,
    ExtractError,
    FeatsetWriteError,
    FolderError,
    ManifestError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featx",
        description="Extract labeled feature files from image folders "
        "with a frozen convolutional backbone.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ext = sub.add_parser("extract", help="embed one image-folder dataset")
    ext.add_argument("--images", required=True, help="dataset root directory")
    ext.add_argument("--out-train", required=True, help="train feature file")
    ext.add_argument("--out-test", required=True, help="test feature file")
    ext.add_argument(
        "--split",
        type=float,
        default=None,
        help="train fraction for flat layouts (default 0.8)",
    )
    ext.add_argument(
        "--seed",
        type=int,
        default=None,
        help="seed for split membership (default 0)",
    )
    ext.add_argument("--backbone", default="resnet50", help="backbone identifier")
    ext.add_argument(
        "--weights",
        default="pretrained",
        help="'pretrained', 'random', or a local state-dict file",
    )
    ext.add_argument(
        "--size", type=int, default=256, help="square resize edge in pixels"
    )
    ext.add_argument("--batch-size", type=int, default=32, help="embedding batch size")
    ext.set_defaults(handler=cmd_extract)

    man = sub.add_parser(
        "manifest", help="write a run manifest over extracted datasets"
    )
    man.add_argument("--out", required=True, help="manifest file to write")
    man.add_argument("--ind", required=True, help="name of the in-distribution dataset")
    man.add_argument(
        "datasets",
        nargs="+",
        metavar="NAME=TRAIN,TEST",
        help="one spec per extracted dataset",
    )
    man.set_defaults(handler=cmd_manifest)
    return parser


def cmd_extract(args) -> int:
    job = ExtractionJob(
        images_root=Path(args.images),
        out_train=Path(args.out_train),
        out_test=Path(args.out_test),
        backbone=args.backbone,
        weights=args.weights,
        split=0.8 if args.split is None else args.split,
        seed=0 if args.seed is None else args.seed,
        size=args.size,
        batch_size=args.batch_size,
    )
    result = run_extraction(job)
    if result.layout == "predefined" and (
        args.split is not None or args.seed is not None
    ):
        print(
            "warning: --split/--seed ignored; dataset ships a predefined split",
            file=sys.stderr,
        )
    print(f"classes: {len(result.classes)} ({', '.join(result.classes)})")
    print(f"train: {result.train_rows} rows -> {args.out_train}")
    print(f"test: {result.test_rows} rows -> {args.out_test}")
    print(f"feature_dim: {result.feature_dim}")
    print(f"skipped: {result.skipped}")
    return EXIT_OK


def _parse_dataset_specs(specs: list[str]) -> dict[str, tuple[Path, Path]]:
    datasets: dict[str, tuple[Path, Path]] = {}
    for spec in specs:
        if "=" not in spec:
            raise ManifestError(f"dataset spec needs NAME=TRAIN,TEST, got {spec!r}")
        name, _, paths = spec.partition("=")
        parts = paths.split(",")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ManifestError(
                f"dataset {name!r} needs exactly train,test paths, got {paths!r}"
            )
        if name in datasets:
            raise ManifestError(f"duplicate dataset name {name!r}")
        datasets[name] = (Path(parts[0]), Path(parts[1]))
    return datasets


def cmd_manifest(args) -> int:
    datasets = _parse_dataset_specs(args.datasets)
    ood_count = emit_manifest(args.out, args.ind, datasets)
    print(f"manifest: {args.out} (ind={args.ind}, ood sources={ood_count})")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            code = args.handler(args)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return code
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def console() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
