"""Image-folder scanning and train/test splitting.

Two layouts are recognized. A flat root holds one subfolder per class and
is split by a seeded ratio. A root holding exactly `train/` and `test/`
subfolders carries a predefined split that is passed through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

IMAGE_SUFFIXES = frozenset(
    {".bmp", ".gif", ".jpeg", ".jpg", ".png", ".tif", ".tiff", ".webp"}
)


class FolderError(Exception):
    """User-facing problem with the image folder layout."""


@dataclass(frozen=True)
class ClassImages:
    """One class subfolder: its name and the image paths inside it."""

    name: str
    paths: tuple[Path, ...]


def list_class_images(root: str | Path) -> list[ClassImages]:
    """Scan one level of class subfolders under root.

    Classes and the paths inside each class come back sorted so every
    downstream artifact is independent of filesystem enumeration order.
    Files without a known image suffix are ignored; dot-folders are not
    classes.
    """
    base = Path(root)
    if not base.is_dir():
        raise FolderError(f"image root not found: {base}")
    class_dirs = sorted(
        d for d in base.iterdir() if d.is_dir() and not d.name.startswith(".")
    )
    if not class_dirs:
        raise FolderError(f"no class subfolders under {base}")
    out = []
    for d in class_dirs:
        paths = tuple(
            sorted(
                p
                for p in d.iterdir()
                if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
            )
        )
        if not paths:
            raise FolderError(f"class folder has no images: {d}")
        out.append(ClassImages(d.name, paths))
    return out


def detect_layout(root: str | Path) -> str:
    """Return 'predefined' when train/ and test/ both exist, else 'ratio'.

    Exactly one of the two present is ambiguous and rejected.
    """
    base = Path(root)
    has_train = (base / "train").is_dir()
    has_test = (base / "test").is_dir()
    if has_train and has_test:
        return "predefined"
    if has_train or has_test:
        raise FolderError(
            f"found only one of train/ and test/ under {base}; "
            "a predefined split needs both"
        )
    return "ratio"


def ratio_split(
    classes: Sequence[ClassImages], ratio: float, seed: int
) -> tuple[list[tuple[int, Path]], list[tuple[int, Path]]]:
    """Seeded per-class split into (label, path) rows.

    Train takes floor(n * ratio) images of each class, clamped so classes
    with two or more images keep at least one on each side; a singleton
    class goes entirely to train. Membership is random per seed but each
    side is returned in lexicographic path order.
    """
    if not 0.0 < ratio < 1.0:
        raise FolderError(f"split ratio must be in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train: list[tuple[int, Path]] = []
    test: list[tuple[int, Path]] = []
    for label, cls in enumerate(classes):
        n = len(cls.paths)
        k = int(n * ratio)
        k = min(max(k, 1), n - 1) if n >= 2 else 1
        chosen = set(rng.permutation(n)[:k].tolist())
        for i, path in enumerate(cls.paths):
            (train if i in chosen else test).append((label, path))
    train.sort(key=lambda row: row[1])
    test.sort(key=lambda row: row[1])
    return train, test


def predefined_split(
    root: str | Path,
) -> tuple[list[str], list[tuple[int, Path]], list[tuple[int, Path]]]:
    """Pass through a root that ships its own train/ and test/ folders.

    The train side defines the class list and therefore the label map;
    test may miss classes but must not introduce new ones.
    """
    base = Path(root)
    train_classes = list_class_images(base / "train")
    test_classes = list_class_images(base / "test")
    names = [c.name for c in train_classes]
    label = {name: i for i, name in enumerate(names)}
    unknown = [c.name for c in test_classes if c.name not in label]
    if unknown:
        raise FolderError(f"test classes absent from train: {', '.join(unknown)}")
    train = [(label[c.name], p) for c in train_classes for p in c.paths]
    test = [(label[c.name], p) for c in test_classes for p in c.paths]
    return names, train, test
