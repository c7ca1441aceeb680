"""Writers for the labeled-feature text format and its audit sidecar.

Format (UTF-8, LF):
  line 1: `FEATSET 1`
  line 2: `<num_rows> <feature_dim> <num_classes>`
  rest:   `<label>,<f_1>,...,<f_P>` with round-trippable decimal floats.

The sidecar is a `<file>.meta` companion of key=value lines recording how
the features were produced; readers of the feature file never touch it.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class FeatsetWriteError(Exception):
    """Rows and labels do not form a writable feature file."""


def write_featset(
    path: str | Path,
    labels: Sequence[int],
    rows: np.ndarray,
    num_classes: int,
) -> None:
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] == 0:
        raise FeatsetWriteError(f"rows must be a non-empty 2-D array, got {rows.shape}")
    if len(labels) != rows.shape[0]:
        raise FeatsetWriteError(
            f"{len(labels)} labels for {rows.shape[0]} feature rows"
        )
    if len(labels) == 0:
        raise FeatsetWriteError("refusing to write an empty feature file")
    if num_classes < 1:
        raise FeatsetWriteError(f"num_classes must be positive, got {num_classes}")
    bad = [int(l) for l in labels if not 0 <= int(l) < num_classes]
    if bad:
        raise FeatsetWriteError(
            f"labels out of range [0, {num_classes}): {sorted(set(bad))}"
        )
    if not np.all(np.isfinite(rows)):
        raise FeatsetWriteError("feature rows must be finite")
    lines = ["FEATSET 1", f"{rows.shape[0]} {rows.shape[1]} {num_classes}"]
    for label, row in zip(labels, rows):
        # repr() floats round-trip exactly through the loader's float().
        lines.append(f"{int(label)}," + ",".join(repr(float(v)) for v in row))
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def sidecar_path(featset_path: str | Path) -> Path:
    return Path(str(featset_path) + ".meta")


def write_sidecar(featset_path: str | Path, info: Mapping[str, str]) -> None:
    """Record preprocessing next to the feature file, key=value per line."""
    lines = [f"{key}={value}" for key, value in info.items()]
    target = sidecar_path(featset_path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
