"""Temperature-scaled confidence scoring and InD/OoD separability metrics.

The detector score for an input is the maximum temperature-scaled softmax
probability of its logits. In-distribution inputs tend to score higher, so
ranking test scores against a pool of foreign-dataset scores yields an
AUROC that quantifies detectability. Input preprocessing is deliberately
not applied; scores depend on logits alone.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .datamodel import FeatureDataset, Split
from .trainer import TrainedHead, predict_logits


@dataclass(frozen=True, eq=False)
class OodPool:
    """Foreign feature rows sampled once per run from the listed sources."""

    source_names: tuple[str, ...]
    features: np.ndarray
    per_dataset_count: int
    source_counts: tuple[int, ...]

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


def odin_scores(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Max temperature-scaled softmax probability per row.

    The row maximum is subtracted before exponentiation, so arbitrarily
    large logits cannot overflow. Equal logits give exactly 1/Y.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] < 1:
        raise ValueError("logits must be a vector or a (N, Y) batch")
    if not np.isfinite(z).all():
        raise ValueError("logits must be finite")
    scaled = z / temperature
    scaled = scaled - scaled.max(axis=1, keepdims=True)
    exp = np.exp(scaled)
    scores = exp.max(axis=1) / exp.sum(axis=1)
    return scores[0] if single else scores


def odin_score(logits: np.ndarray, temperature: float) -> float:
    """Detector score for a single logit vector."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("odin_score takes one logit vector; use odin_scores for batches")
    return float(odin_scores(z, temperature))


def build_ood_pool(datasets: list[FeatureDataset], per_dataset_count: int,
                   seed: int) -> OodPool:
    """Draw per_dataset_count rows uniformly without replacement from each
    source's full row set (train plus test). A source smaller than the
    requested count contributes everything it has, with a warning."""
    if not datasets:
        raise ValueError("need at least one OoD source dataset")
    if per_dataset_count < 1:
        raise ValueError("per_dataset_count must be positive")
    width = datasets[0].feature_dim
    for ds in datasets[1:]:
        if ds.feature_dim != width:
            raise ValueError(
                f"OoD source {ds.name} has feature_dim {ds.feature_dim}, "
                f"expected {width}"
            )
    rng = np.random.default_rng(seed)
    chunks: list[np.ndarray] = []
    counts: list[int] = []
    for ds in datasets:
        rows = ds.all_features()
        n = rows.shape[0]
        take = min(per_dataset_count, n)
        if take < per_dataset_count:
            warnings.warn(
                f"OoD source {ds.name} holds {n} rows, fewer than the "
                f"requested {per_dataset_count}; using all of them",
                RuntimeWarning,
                stacklevel=2,
            )
        # sorting the chosen indices keeps source row order, so the pool
        # depends only on which rows were drawn
        idx = np.sort(rng.choice(n, size=take, replace=False))
        chunks.append(rows[idx])
        counts.append(take)
    return OodPool(
        source_names=tuple(ds.name for ds in datasets),
        features=np.vstack(chunks),
        per_dataset_count=per_dataset_count,
        source_counts=tuple(counts),
    )


def auroc(in_scores: np.ndarray, out_scores: np.ndarray) -> float:
    """Probability that a random InD score ranks above a random OoD score,
    counting ties as half. Exactly the pairwise estimator, computed by
    binary search instead of the quadratic double loop."""
    a = np.asarray(in_scores, dtype=np.float64)
    b = np.asarray(out_scores, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both score sets must be non-empty")
    out_sorted = np.sort(b)
    lo = np.searchsorted(out_sorted, a, side="left")
    hi = np.searchsorted(out_sorted, a, side="right")
    wins = int(lo.sum())
    ties = int((hi - lo).sum())
    return (wins + 0.5 * ties) / (a.size * b.size)


def roc_curve(in_scores: np.ndarray, out_scores: np.ndarray) -> list[RocPoint]:
    """One point per distinct threshold from the union of both score sets,
    plus sentinels at plus and minus infinity. An instance counts as
    detected InD when its score is >= the threshold; positives are InD."""
    a = np.sort(np.asarray(in_scores, dtype=np.float64))
    b = np.sort(np.asarray(out_scores, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("both score sets must be non-empty")
    levels = np.unique(np.concatenate([a, b]))
    thresholds = np.concatenate([[np.inf], levels[::-1], [-np.inf]])
    points = []
    for lam in thresholds:
        tpr = (a.size - np.searchsorted(a, lam, side="left")) / a.size
        fpr = (b.size - np.searchsorted(b, lam, side="left")) / b.size
        points.append(RocPoint(float(lam), float(tpr), float(fpr)))
    points.sort(key=lambda pt: (pt.fpr, pt.tpr))
    return points


def trapezoid_area(points: list[RocPoint]) -> float:
    """Area under the ROC polyline, trapezoidal rule over ascending FPR."""
    area = 0.0
    for prev, cur in zip(points, points[1:]):
        area += 0.5 * (prev.tpr + cur.tpr) * (cur.fpr - prev.fpr)
    return area


def score_model(head: TrainedHead, ind_test: Split, pool: OodPool,
                temperature: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Score the InD test split against the pool through one trained head.

    Returns (auroc, in_scores, out_scores).
    """
    if len(ind_test) == 0:
        raise ValueError("InD test split is empty")
    if len(pool) == 0:
        raise ValueError("OoD pool is empty")
    in_scores = odin_scores(predict_logits(head, ind_test.x), temperature)
    out_scores = odin_scores(predict_logits(head, pool.features), temperature)
    return auroc(in_scores, out_scores), in_scores, out_scores


def write_score_dump(path, in_scores: np.ndarray, out_scores: np.ndarray) -> None:
    """Optional per-instance score dump: instance_id,origin,score."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("instance_id,origin,score\n")
        for i, s in enumerate(np.asarray(in_scores, dtype=np.float64)):
            fh.write(f"{i},in,{s!r}\n")
        for j, s in enumerate(np.asarray(out_scores, dtype=np.float64)):
            fh.write(f"{j},out,{s!r}\n")
