"""Domain types, FEATSET file handling, and dominance semantics.

Shared vocabulary for the package: binary pruning masks over extracted
feature inputs, labeled feature datasets with train/test splits, the
three-objective vectors the search optimizes, and the parameter-count
accounting used in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEATSET_MAGIC = "FEATSET 1"

OBJECTIVE_NAMES = ("accuracy", "active_neurons", "auroc")


class FeatsetError(ValueError):
    """A FEATSET file or dataset violates the format contract."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PruningMask:
    """Bit vector over the P feature inputs; gene i == 1 keeps input i wired."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("mask must be a non-empty one-dimensional bit vector")
        if bits.max(initial=0) > 1:
            raise ValueError("mask bits must be exactly 0 or 1")
        object.__setattr__(self, "bits", _readonly(bits))

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PruningMask) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        return f"PruningMask(P={len(self)}, active={int(self.bits.sum())})"

    @property
    def key(self) -> bytes:
        """Exact content key, suitable for caching by mask bits."""
        return self.bits.tobytes()

    def to_hex(self) -> str:
        """Hex of the packed bits; the most significant bit of the first
        byte is gene 0, trailing pad bits are zero."""
        return np.packbits(self.bits).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, length: int) -> "PruningMask":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        bits = np.unpackbits(raw)
        if bits.size < length:
            raise ValueError(f"hex encodes {bits.size} bits, need {length}")
        if bits[length:].any():
            raise ValueError("nonzero padding bits in mask hex")
        return cls(bits[:length])

    @classmethod
    def zeros(cls, length: int) -> "PruningMask":
        return cls(np.zeros(length, dtype=np.uint8))

    @classmethod
    def ones(cls, length: int) -> "PruningMask":
        return cls(np.ones(length, dtype=np.uint8))


@dataclass(frozen=True, eq=False)
class Split:
    """One labeled partition: feature rows aligned with integer labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("labels must align one-to-one with feature rows")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "y", _readonly(y))

    def __len__(self) -> int:
        return int(self.x.shape[0])

    @classmethod
    def empty(cls, feature_dim: int) -> "Split":
        return cls(np.zeros((0, feature_dim)), np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class FeatureDataset:
    """A named feature corpus: fixed width P, Y classes, train/test splits."""

    name: str
    feature_dim: int
    num_classes: int
    train: Split
    test: Split

    def __post_init__(self) -> None:
        if self.feature_dim <= 0 or self.num_classes <= 0:
            raise ValueError("feature_dim and num_classes must be positive")
        for split_name, split in (("train", self.train), ("test", self.test)):
            if split.x.shape[1] != self.feature_dim:
                raise ValueError(
                    f"{self.name}: {split_name} rows have width "
                    f"{split.x.shape[1]}, expected {self.feature_dim}"
                )
            if len(split) and (split.y.min() < 0 or split.y.max() >= self.num_classes):
                raise ValueError(f"{self.name}: {split_name} labels out of range")

    def all_features(self) -> np.ndarray:
        """Train and test rows stacked; the full row set OoD pools draw from."""
        return np.vstack([self.train.x, self.test.x])


@dataclass(frozen=True)
class ArchSpec:
    """Shape of the dense head: P inputs, one hidden layer, Y outputs."""

    feature_dim: int
    hidden_units: int = 512
    num_classes: int = 2

    def __post_init__(self) -> None:
        if min(self.feature_dim, self.hidden_units, self.num_classes) <= 0:
            raise ValueError("all architecture dimensions must be positive")


@dataclass(frozen=True)
class ObjectiveVector:
    """One evaluation outcome. Accuracy and AUROC are maximized, the
    active neuron count is minimized."""

    accuracy: float
    active_neurons: int
    auroc: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.accuracy <= 1.0):
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if not (0.0 <= self.auroc <= 1.0):
            raise ValueError(f"auroc {self.auroc} outside [0, 1]")
        if self.active_neurons < 0:
            raise ValueError("active_neurons must be non-negative")

    def as_tuple(self) -> tuple[float, int, float]:
        return (self.accuracy, self.active_neurons, self.auroc)


@dataclass
class Individual:
    """A mask plus, once evaluated, its objectives and evaluation index."""

    mask: PruningMask
    objectives: ObjectiveVector | None = None
    eval_index: int | None = None
    run_id: int = 0


@dataclass
class EvolutionConfig:
    """Run settings. Defaults follow the reference configuration: a budget
    of 200 trainings, population 30, per-gene mutation 1/P, batch size 32,
    detector temperature 1000, and up to 600 training epochs with a
    10-round early stop."""

    max_evals: int = 200
    population_size: int = 30
    mutation_prob: float | None = None
    batch_size: int = 32
    odin_temperature: float = 1000.0
    max_epochs: int = 600
    early_stop_patience: int = 10
    learning_rate: float = 0.01
    ood_samples_per_dataset: int = 0
    master_seed: int = 0
    hidden_units: int = 512
    count_initial_evals: bool = True

    def validate(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.count_initial_evals and self.max_evals < self.population_size:
            raise ValueError("max_evals must cover the initial population")
        if not self.count_initial_evals and self.max_evals < 1:
            raise ValueError("max_evals must be positive")
        if self.mutation_prob is not None and not (0.0 <= self.mutation_prob <= 1.0):
            raise ValueError("mutation_prob must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.odin_temperature <= 0:
            raise ValueError("odin_temperature must be positive")
        if self.max_epochs < 0 or self.early_stop_patience < 0:
            raise ValueError("epoch limits must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.ood_samples_per_dataset < 0:
            raise ValueError("ood_samples_per_dataset must be non-negative")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be positive")

    def mutation_prob_for(self, feature_dim: int) -> float:
        """Per-gene flip probability; defaults to 1/P when unset."""
        if self.mutation_prob is not None:
            return self.mutation_prob
        return 1.0 / feature_dim

    def ood_count_for(self, ind_test_size: int, num_sources: int) -> int:
        """Rows drawn per OoD source. Zero means automatic: the pool
        roughly matches the InD test split, spread evenly over sources."""
        if self.ood_samples_per_dataset > 0:
            return self.ood_samples_per_dataset
        if num_sources < 1:
            raise ValueError("need at least one OoD source")
        return max(1, math.ceil(ind_test_size / num_sources))


# Fields that --set / manifest overrides may touch, with their parsers.
def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_prob(text: str) -> float | None:
    if text.strip().lower() in ("none", "auto"):
        return None
    return float(text)


CONFIG_FIELD_PARSERS = {
    "max_evals": int,
    "population_size": int,
    "mutation_prob": _parse_optional_prob,
    "batch_size": int,
    "odin_temperature": float,
    "max_epochs": int,
    "early_stop_patience": int,
    "learning_rate": float,
    "ood_samples_per_dataset": int,
    "master_seed": int,
    "hidden_units": int,
    "count_initial_evals": _parse_bool,
}


def apply_config_overrides(cfg: EvolutionConfig, overrides: dict[str, str]) -> EvolutionConfig:
    """Return a copy of cfg with string-typed overrides parsed and applied.

    Raises ValueError for unknown keys or unparsable values.
    """
    values = dict(cfg.__dict__)
    for key, raw in overrides.items():
        parser = CONFIG_FIELD_PARSERS.get(key)
        if parser is None:
            raise ValueError(f"unknown config key: {key}")
        try:
            values[key] = parser(raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key}: {raw!r} ({exc})") from exc
    return EvolutionConfig(**values)


def _format_float(v: float) -> str:
    # repr gives the shortest digits that round-trip to the same float64
    return repr(float(v))


def _parse_featset_text(path: Path) -> tuple[np.ndarray, np.ndarray, int, int]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FeatsetError(f"{path}: cannot read ({exc})") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FeatsetError(f"{path}: line 1: empty file")
    if lines[0] != FEATSET_MAGIC:
        raise FeatsetError(f"{path}: line 1: expected '{FEATSET_MAGIC}', got {lines[0]!r}")
    if len(lines) < 2:
        raise FeatsetError(f"{path}: line 2: missing header")
    header = lines[1].split()
    if len(header) != 3:
        raise FeatsetError(
            f"{path}: line 2: header needs '<num_rows> <feature_dim> <num_classes>'"
        )
    try:
        num_rows, feature_dim, num_classes = (int(h) for h in header)
    except ValueError as exc:
        raise FeatsetError(f"{path}: line 2: non-integer header field") from exc
    if num_rows <= 0:
        raise FeatsetError(f"{path}: line 2: empty dataset (num_rows={num_rows})")
    if feature_dim <= 0 or num_classes <= 0:
        raise FeatsetError(f"{path}: line 2: dimensions must be positive")
    if len(lines) - 2 != num_rows:
        raise FeatsetError(
            f"{path}: line 2: declares {num_rows} rows, file holds {len(lines) - 2}"
        )

    x = np.empty((num_rows, feature_dim), dtype=np.float64)
    y = np.empty(num_rows, dtype=np.int64)
    for i in range(num_rows):
        lineno = i + 3
        fields = lines[i + 2].split(",")
        if len(fields) != feature_dim + 1:
            raise FeatsetError(
                f"{path}: line {lineno}: row has {len(fields) - 1} values, "
                f"expected {feature_dim}"
            )
        try:
            label = int(fields[0])
        except ValueError as exc:
            raise FeatsetError(f"{path}: line {lineno}: non-integer label") from exc
        if not (0 <= label < num_classes):
            raise FeatsetError(
                f"{path}: line {lineno}: label {label} outside [0, {num_classes - 1}]"
            )
        try:
            x[i] = np.array(fields[1:], dtype=np.float64)
        except ValueError as exc:
            raise FeatsetError(f"{path}: line {lineno}: malformed feature value") from exc
        if not np.isfinite(x[i]).all():
            raise FeatsetError(f"{path}: line {lineno}: non-finite feature value")
        y[i] = label
    return x, y, feature_dim, num_classes


def load_feature_dataset(path: str | Path) -> FeatureDataset:
    """Load one FEATSET file. Its rows land in the train split; pair it with
    a second file via load_split_dataset when a test split is needed."""
    p = Path(path)
    x, y, feature_dim, num_classes = _parse_featset_text(p)
    return FeatureDataset(
        name=p.stem,
        feature_dim=feature_dim,
        num_classes=num_classes,
        train=Split(x, y),
        test=Split.empty(feature_dim),
    )


def load_split_dataset(
    train_path: str | Path, test_path: str | Path, name: str | None = None
) -> FeatureDataset:
    """Load a train/test FEATSET pair into one dataset."""
    tr_x, tr_y, tr_p, tr_c = _parse_featset_text(Path(train_path))
    te_x, te_y, te_p, te_c = _parse_featset_text(Path(test_path))
    if tr_p != te_p:
        raise FeatsetError(
            f"{test_path}: feature_dim {te_p} differs from train file ({tr_p})"
        )
    if tr_c != te_c:
        raise FeatsetError(
            f"{test_path}: num_classes {te_c} differs from train file ({tr_c})"
        )
    return FeatureDataset(
        name=name or Path(train_path).stem,
        feature_dim=tr_p,
        num_classes=tr_c,
        train=Split(tr_x, tr_y),
        test=Split(te_x, te_y),
    )


def load_pool_source(name: str, paths: list[str | Path]) -> FeatureDataset:
    """Concatenate one or more FEATSET files into a named OoD source."""
    if not paths:
        raise FeatsetError(f"OoD source {name}: no files listed")
    xs, ys = [], []
    feature_dim = num_classes = None
    for p in paths:
        x, y, fd, nc = _parse_featset_text(Path(p))
        if feature_dim is None:
            feature_dim, num_classes = fd, nc
        elif (fd, nc) != (feature_dim, num_classes):
            raise FeatsetError(
                f"{p}: dimensions ({fd}, {nc}) differ from first file "
                f"of source {name} ({feature_dim}, {num_classes})"
            )
        xs.append(x)
        ys.append(y)
    return FeatureDataset(
        name=name,
        feature_dim=int(feature_dim),
        num_classes=int(num_classes),
        train=Split(np.vstack(xs), np.concatenate(ys)),
        test=Split.empty(int(feature_dim)),
    )


def save_featset(path: str | Path, x: np.ndarray, y: np.ndarray, num_classes: int) -> None:
    """Serialize rows as a FEATSET file (UTF-8, LF endings)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("need (N, P) features and N labels")
    if x.shape[0] == 0:
        raise ValueError("refusing to write an empty FEATSET file")
    out = [FEATSET_MAGIC, f"{x.shape[0]} {x.shape[1]} {num_classes}"]
    for row, label in zip(x, y):
        out.append(str(int(label)) + "," + ",".join(_format_float(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def save_feature_dataset(dataset: FeatureDataset, train_path: str | Path,
                         test_path: str | Path | None = None) -> None:
    savefile = dataset.train
    save_featset(train_path, savefile.x, savefile.y, dataset.num_classes)
    if test_path is not None:
        save_featset(test_path, dataset.test.x, dataset.test.y, dataset.num_classes)


def active_count(mask: PruningMask) -> int:
    """Number of genes set to 1."""
    return int(mask.bits.sum())


def mem_ratio(mask: PruningMask, arch: ArchSpec) -> float:
    """Fraction of head parameters kept: weights of active input rows plus
    all biases and the output layer, over the unpruned parameter count."""
    if len(mask) != arch.feature_dim:
        raise ValueError(
            f"mask length {len(mask)} does not match feature_dim {arch.feature_dim}"
        )
    h, y = arch.hidden_units, arch.num_classes
    kept = active_count(mask) * h + h + h * y + y
    total = arch.feature_dim * h + h + h * y + y
    return kept / total


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """True when a is no worse than b on every objective and strictly
    better on at least one (accuracy up, active_neurons down, auroc up)."""
    no_worse = (
        a.accuracy >= b.accuracy
        and a.active_neurons <= b.active_neurons
        and a.auroc >= b.auroc
    )
    strictly_better = (
        a.accuracy > b.accuracy
        or a.active_neurons < b.active_neurons
        or a.auroc > b.auroc
    )
    return no_worse and strictly_better
