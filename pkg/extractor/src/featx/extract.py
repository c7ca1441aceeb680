"""Extraction jobs: image folder in, train/test feature files out.

Row order inside each output is lexicographic by image path, so reruns on
an unchanged folder are byte-identical regardless of filesystem order or
internal batching.
"""

from __future__ import annotations

import os
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image

from .backbone import Backbone, embed_images, load_backbone
from .backbone import NORMALIZE_MEAN, NORMALIZE_STD
from .featwrite import write_featset, write_sidecar
from .folders import detect_layout, list_class_images, predefined_split, ratio_split


class ExtractError(Exception):
    """User-facing problem running an extraction job."""


class ManifestError(Exception):
    """User-facing problem assembling a run manifest."""


@dataclass(frozen=True)
class ExtractionJob:
    """One dataset to extract: where the images live and where rows go."""

    images_root: Path
    out_train: Path
    out_test: Path
    backbone: str = "resnet50"
    weights: str = "pretrained"
    split: float = 0.8
    seed: int = 0
    size: int = 256
    batch_size: int = 32


@dataclass(frozen=True)
class ExtractionResult:
    classes: tuple[str, ...]
    train_rows: int
    test_rows: int
    skipped: int
    feature_dim: int
    layout: str


def _embed_side(
    rows: list[tuple[int, Path]], backbone: Backbone, size: int, batch_size: int
) -> tuple[list[int], np.ndarray, int]:
    """Embed (label, path) rows in fixed chunks; unreadable files are
    skipped with a warning so one bad image never sinks the dataset."""
    labels: list[int] = []
    blocks: list[np.ndarray] = []
    skipped = 0
    for start in range(0, len(rows), batch_size):
        images: list[Image.Image] = []
        kept: list[int] = []
        for label, path in rows[start : start + batch_size]:
            try:
                with Image.open(path) as img:
                    images.append(img.convert("RGB"))
            except OSError as exc:
                warnings.warn(
                    f"skipping unreadable image {path}: {exc}", RuntimeWarning
                )
                skipped += 1
                continue
            kept.append(label)
        if images:
            blocks.append(embed_images(backbone, images, size))
            labels.extend(kept)
    if blocks:
        return labels, np.concatenate(blocks), skipped
    return labels, np.empty((0, backbone.feature_dim), dtype=np.float32), skipped


def _sidecar_info(
    job: ExtractionJob,
    layout: str,
    side: str,
    classes: list[str],
    rows: int,
    skipped: int,
    backbone: Backbone,
) -> dict[str, str]:
    info = {
        "side": side,
        "backbone": backbone.name,
        "weights": backbone.weights,
        "feature_dim": str(backbone.feature_dim),
        "classes": ",".join(classes),
        "layout": layout,
    }
    if layout == "ratio":
        info["split"] = repr(job.split)
        info["seed"] = str(job.seed)
    info.update(
        {
            "resize": f"{job.size}x{job.size} bilinear",
            "batch": str(job.batch_size),
            "scale": "1/255",
            "normalize_mean": ",".join(repr(v) for v in NORMALIZE_MEAN),
            "normalize_std": ",".join(repr(v) for v in NORMALIZE_STD),
            "rows": str(rows),
            "skipped": str(skipped),
        }
    )
    return info


def run_extraction(
    job: ExtractionJob, backbone: Backbone | None = None
) -> ExtractionResult:
    """Extract one dataset; pass a preloaded backbone to share it across jobs."""
    if not 0.0 < job.split < 1.0:
        raise ExtractError(f"split ratio must be in (0, 1), got {job.split}")
    if job.size < 1:
        raise ExtractError(f"resize target must be positive, got {job.size}")
    if job.batch_size < 1:
        raise ExtractError(f"batch size must be positive, got {job.batch_size}")
    out_train = Path(job.out_train)
    out_test = Path(job.out_test)
    if out_train.resolve() == out_test.resolve():
        raise ExtractError("out-train and out-test must be different files")

    root = Path(job.images_root)
    layout = detect_layout(root)
    if layout == "predefined":
        classes, train_rows, test_rows = predefined_split(root)
    else:
        folders = list_class_images(root)
        classes = [c.name for c in folders]
        train_rows, test_rows = ratio_split(folders, job.split, job.seed)
    if not train_rows or not test_rows:
        raise ExtractError("split left the train or test side empty")

    bb = backbone if backbone is not None else load_backbone(job.backbone, job.weights)
    train_labels, train_x, skipped_train = _embed_side(
        train_rows, bb, job.size, job.batch_size
    )
    test_labels, test_x, skipped_test = _embed_side(
        test_rows, bb, job.size, job.batch_size
    )
    if not train_labels or not test_labels:
        raise ExtractError("every image on one side was unreadable")

    num_classes = len(classes)
    write_featset(out_train, train_labels, train_x, num_classes)
    write_sidecar(
        out_train,
        _sidecar_info(job, layout, "train", classes, len(train_labels), skipped_train, bb),
    )
    write_featset(out_test, test_labels, test_x, num_classes)
    write_sidecar(
        out_test,
        _sidecar_info(job, layout, "test", classes, len(test_labels), skipped_test, bb),
    )
    return ExtractionResult(
        classes=tuple(classes),
        train_rows=len(train_labels),
        test_rows=len(test_labels),
        skipped=skipped_train + skipped_test,
        feature_dim=bb.feature_dim,
        layout=layout,
    )


_NAME_RE = re.compile(r"[A-Za-z0-9_-]+\Z")


def emit_manifest(
    out_path: str | Path,
    ind_name: str,
    datasets: Mapping[str, tuple[str | Path, str | Path]],
) -> int:
    """Write the search CLI's run manifest, one InD pair plus the rest as
    OoD sources; returns the OoD source count.

    Each OoD dataset contributes both of its files under one source name,
    so it stays a single dataset for per-dataset sample counts.
    """
    if ind_name not in datasets:
        raise ManifestError(
            f"InD dataset {ind_name!r} not among {sorted(datasets)}"
        )
    for name, (train, test) in datasets.items():
        if not _NAME_RE.fullmatch(name):
            raise ManifestError(
                f"dataset name {name!r} must match [A-Za-z0-9_-]+"
            )
        for p in (train, test):
            if not Path(p).is_file():
                raise ManifestError(f"missing extractor output: {p}")
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    base = out.parent.resolve()

    def rel(p: str | Path) -> str:
        return os.path.relpath(Path(p).resolve(), base)

    train, test = datasets[ind_name]
    lines = [
        "# feature-set manifest; paths are relative to this file",
        f"ind_train={rel(train)}",
        f"ind_test={rel(test)}",
    ]
    others = sorted(name for name in datasets if name != ind_name)
    if not others:
        warnings.warn(
            "manifest written without OoD sources; the search needs at least one",
            RuntimeWarning,
        )
    for name in others:
        ood_train, ood_test = datasets[name]
        lines.append(f"ood.{name}={rel(ood_train)}")
        lines.append(f"ood.{name}={rel(ood_test)}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return len(others)
