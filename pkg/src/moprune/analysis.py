"""Post-hoc analysis over finished runs.

Combines per-run archives into one super front, slices out the best
fraction per objective, ranks input neurons by how often the front keeps
them, and builds quantile-zone ensembles whose members vote by averaged
softmax probabilities (classification) or averaged detector scores
(detection).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datamodel import (
    EvolutionConfig,
    ObjectiveVector,
    PruningMask,
    Split,
    dominates,
)
from .moea import RunResult
from .ood import OodPool, auroc, odin_scores
from .trainer import TrainedHead, predict_logits

# zone bounds are percentile pairs over the chosen metric
ZONE_BOUNDS = ((50, 60), (55, 65), (60, 70), (65, 75),
               (70, 80), (75, 85), (80, 90), (85, 95))

FRONT_CSV_HEADER = "accuracy,active_neurons,auroc,run_id,mask_hex"


@dataclass(frozen=True, eq=False)
class FrontSolution:
    """One archive entry, traceable back to its run and evaluation."""

    mask: PruningMask
    objectives: ObjectiveVector
    run_id: int
    eval_index: int


@dataclass(frozen=True)
class SuperFront:
    """Mutually nondominating union of several runs' archive fronts."""

    solutions: tuple[FrontSolution, ...]
    source_run_count: int


@dataclass(frozen=True)
class NeuronReport:
    """How often one input neuron survives on the front, and the spread of
    each objective over the solutions that keep it (five-number summaries,
    None when no solution keeps the neuron)."""

    neuron_index: int
    frequency: float
    objective_stats: dict[str, tuple[float, float, float, float, float] | None]


@dataclass(frozen=True)
class ZoneCandidate:
    """A front solution with its head re-materialized for ensembling."""

    solution: FrontSolution
    head: TrainedHead


@dataclass(frozen=True)
class Zone:
    q_min: int
    q_max: int
    lo: float
    hi: float
    members: tuple[ZoneCandidate, ...]


@dataclass(frozen=True)
class ZoneSet:
    metric: str
    zones: tuple[Zone, ...]


@dataclass(frozen=True)
class ZoneReportRow:
    q_min: int
    q_max: int
    n_members: int
    member_summary: tuple[float, float, float, float, float] | None
    member_best: float | None
    ensemble_value: float | None


def _solution_sort_key(sol: FrontSolution) -> tuple[int, int]:
    return (sol.run_id, sol.eval_index)


def super_front_from_solutions(solutions: list[FrontSolution],
                               source_run_count: int) -> SuperFront:
    """Collapse duplicate masks (first occurrence wins) and keep only the
    mutually nondominating survivors, in evaluation order."""
    ordered = sorted(solutions, key=_solution_sort_key)
    seen: set[bytes] = set()
    unique: list[FrontSolution] = []
    for sol in ordered:
        if sol.mask.key in seen:
            continue
        seen.add(sol.mask.key)
        unique.append(sol)
    kept = [
        sol for sol in unique
        if not any(
            dominates(other.objectives, sol.objectives)
            for other in unique if other is not sol
        )
    ]
    return SuperFront(solutions=tuple(kept), source_run_count=source_run_count)


def super_pareto(runs: list[RunResult]) -> SuperFront:
    """Union the archive fronts of several runs into one super front."""
    if not runs:
        raise ValueError("need at least one run")
    solutions = [
        FrontSolution(m.mask, m.objectives, result.run_id, m.eval_index)
        for result in runs
        for m in result.archive_front
    ]
    return super_front_from_solutions(solutions, source_run_count=len(runs))


_OBJECTIVE_KEYS = {
    # (value extractor, True when larger is better)
    "accuracy": (lambda o: o.accuracy, True),
    "active_neurons": (lambda o: o.active_neurons, False),
    "auroc": (lambda o: o.auroc, True),
}


def objective_extremes_slice(front: SuperFront, objective: str,
                             top_fraction: float = 0.10) -> list[FrontSolution]:
    """The best ceil(top_fraction * |front|) solutions for one objective.
    Ties resolve by evaluation order."""
    if objective not in _OBJECTIVE_KEYS:
        raise ValueError(f"unknown objective: {objective}")
    if not (0.0 < top_fraction <= 1.0):
        raise ValueError("top_fraction must lie in (0, 1]")
    if not front.solutions:
        return []
    value_of, maximize = _OBJECTIVE_KEYS[objective]
    take = math.ceil(top_fraction * len(front.solutions))
    sign = -1.0 if maximize else 1.0
    ranked = sorted(
        front.solutions,
        key=lambda s: (sign * value_of(s.objectives), _solution_sort_key(s)),
    )
    return ranked[:take]


def neuron_activation_counts(front: SuperFront) -> np.ndarray:
    """How many front solutions keep each input neuron."""
    if not front.solutions:
        raise ValueError("empty front")
    stacked = np.stack([sol.mask.bits for sol in front.solutions])
    return stacked.sum(axis=0).astype(np.int64)


def _five_number(values: np.ndarray) -> tuple[float, float, float, float, float]:
    q = np.quantile(np.asarray(values, dtype=np.float64), [0.0, 0.25, 0.5, 0.75, 1.0])
    return tuple(float(v) for v in q)


def neuron_frequency(front: SuperFront, top_k: int = 10) -> list[NeuronReport]:
    """The top_k most frequently kept neurons, most frequent first, ties to
    the lower index. Each report carries five-number summaries of the three
    objectives over the solutions that keep the neuron."""
    if top_k < 1:
        raise ValueError("top_k must be positive")
    counts = neuron_activation_counts(front)
    n = len(front.solutions)
    order = sorted(range(counts.size), key=lambda i: (-counts[i], i))
    reports = []
    for idx in order[:top_k]:
        keepers = [
            sol.objectives for sol in front.solutions if sol.mask.bits[idx] == 1
        ]
        if keepers:
            stats = {
                "accuracy": _five_number(np.array([o.accuracy for o in keepers])),
                "active_neurons": _five_number(
                    np.array([o.active_neurons for o in keepers], dtype=np.float64)
                ),
                "auroc": _five_number(np.array([o.auroc for o in keepers])),
            }
        else:
            stats = {"accuracy": None, "active_neurons": None, "auroc": None}
        reports.append(NeuronReport(
            neuron_index=idx,
            frequency=counts[idx] / n,
            objective_stats=stats,
        ))
    return reports


def nearest_rank_percentile(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank percentile: the value at rank ceil(q/100 * n), 1-based."""
    n = sorted_values.size
    if n == 0:
        raise ValueError("empty value set")
    if not (0.0 < q <= 100.0):
        raise ValueError("q must lie in (0, 100]")
    rank = max(1, math.ceil(q / 100.0 * n))
    return float(sorted_values[rank - 1])


def _metric_value(objectives: ObjectiveVector, metric: str) -> float:
    if metric == "accuracy":
        return objectives.accuracy
    if metric == "auroc":
        return objectives.auroc
    raise ValueError(f"unknown ensemble metric: {metric}")


def quantile_ensemble_zones(candidates: list[ZoneCandidate], metric: str) -> ZoneSet:
    """Bucket candidates into the eight overlapping percentile zones of the
    chosen metric. Bounds are nearest-rank percentiles of the candidates'
    stored metric values; membership is inclusive on both ends."""
    if not candidates:
        raise ValueError("need at least one candidate")
    _metric_value(candidates[0].solution.objectives, metric)  # validates name
    values = np.sort(np.array([
        _metric_value(c.solution.objectives, metric) for c in candidates
    ]))
    zones = []
    for q_min, q_max in ZONE_BOUNDS:
        lo = nearest_rank_percentile(values, q_min)
        hi = nearest_rank_percentile(values, q_max)
        members = tuple(
            c for c in candidates
            if lo <= _metric_value(c.solution.objectives, metric) <= hi
        )
        zones.append(Zone(q_min=q_min, q_max=q_max, lo=lo, hi=hi, members=members))
    return ZoneSet(metric=metric, zones=tuple(zones))


def ensemble_probabilities(heads: list[TrainedHead], features: np.ndarray) -> np.ndarray:
    """Mean softmax probability (temperature 1) across member heads."""
    if not heads:
        raise ValueError("empty ensemble")
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    total = np.zeros((x.shape[0], heads[0].arch.num_classes))
    for head in heads:
        z = predict_logits(head, x)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        total += e / e.sum(axis=1, keepdims=True)
    probs = total / len(heads)
    return probs[0] if single else probs


def ensemble_predict(heads: list[TrainedHead], features: np.ndarray):
    """Class predicted by averaged member probabilities. A single (P,)
    vector yields an int, a batch yields an int array. Ties resolve to the
    lowest class index."""
    probs = ensemble_probabilities(heads, features)
    if probs.ndim == 1:
        return int(np.argmax(probs))
    return np.argmax(probs, axis=1)


def ensemble_accuracy(heads: list[TrainedHead], split: Split) -> float:
    if len(split) == 0:
        raise ValueError("cannot score an empty split")
    preds = ensemble_predict(heads, split.x)
    return float(np.mean(preds == split.y))


def ensemble_auroc(heads: list[TrainedHead], ind_test: Split, pool: OodPool,
                   temperature: float) -> float:
    """AUROC of per-instance detector scores averaged across members."""
    if not heads:
        raise ValueError("empty ensemble")
    in_total = np.zeros(len(ind_test))
    out_total = np.zeros(len(pool))
    for head in heads:
        in_total += odin_scores(predict_logits(head, ind_test.x), temperature)
        out_total += odin_scores(predict_logits(head, pool.features), temperature)
    return auroc(in_total / len(heads), out_total / len(heads))


def zone_report(zone_set: ZoneSet, ind_test: Split, pool: OodPool,
                cfg: EvolutionConfig) -> list[ZoneReportRow]:
    """Per zone: the five-number summary of member values, the best member,
    and the ensemble value, all computed fresh against the given test split
    and pool. Empty zones come back with None entries."""
    rows = []
    for zone in zone_set.zones:
        if not zone.members:
            rows.append(ZoneReportRow(zone.q_min, zone.q_max, 0, None, None, None))
            continue
        heads = [m.head for m in zone.members]
        if zone_set.metric == "accuracy":
            from .trainer import accuracy as head_accuracy
            member_values = np.array([head_accuracy(h, ind_test) for h in heads])
            ens = ensemble_accuracy(heads, ind_test)
        else:
            from .ood import score_model
            member_values = np.array([
                score_model(h, ind_test, pool, cfg.odin_temperature)[0]
                for h in heads
            ])
            ens = ensemble_auroc(heads, ind_test, pool, cfg.odin_temperature)
        rows.append(ZoneReportRow(
            q_min=zone.q_min,
            q_max=zone.q_max,
            n_members=len(zone.members),
            member_summary=_five_number(member_values),
            member_best=float(member_values.max()),
            ensemble_value=float(ens),
        ))
    return rows


# ---------------------------------------------------------------------------
# report files


def write_front_csv(path, solutions: list[FrontSolution]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(FRONT_CSV_HEADER + "\n")
        for sol in solutions:
            o = sol.objectives
            fh.write(
                f"{o.accuracy!r},{o.active_neurons},{o.auroc!r},"
                f"{sol.run_id},{sol.mask.to_hex()}\n"
            )


def read_front_csv(path, feature_dim: int,
                   eval_indices: dict[tuple[int, str], int] | None = None
                   ) -> list[FrontSolution]:
    """Load front rows. eval_indices, when given, maps (run_id, mask_hex)
    to the original evaluation index; otherwise file order stands in."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != FRONT_CSV_HEADER:
        raise ValueError(f"{path}: not a front CSV")
    out = []
    for order, line in enumerate(lines[1:]):
        if not line:
            continue
        acc_s, act_s, auc_s, run_s, hex_s = line.split(",")
        run_id = int(run_s)
        if eval_indices is not None:
            eval_index = eval_indices[(run_id, hex_s)]
        else:
            eval_index = order
        out.append(FrontSolution(
            mask=PruningMask.from_hex(hex_s, feature_dim),
            objectives=ObjectiveVector(float(acc_s), int(act_s), float(auc_s)),
            run_id=run_id,
            eval_index=eval_index,
        ))
    return out


def write_extremes_csv(path, slices: dict[str, list[FrontSolution]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("objective," + FRONT_CSV_HEADER + "\n")
        for objective in sorted(slices):
            for sol in slices[objective]:
                o = sol.objectives
                fh.write(
                    f"{objective},{o.accuracy!r},{o.active_neurons},"
                    f"{o.auroc!r},{sol.run_id},{sol.mask.to_hex()}\n"
                )


_NEURON_STAT_COLS = [
    f"{obj}_{stat}"
    for obj in ("accuracy", "active_neurons", "auroc")
    for stat in ("min", "q1", "median", "q3", "max")
]


def write_neuron_csv(path, reports: list[NeuronReport]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("neuron_index,frequency," + ",".join(_NEURON_STAT_COLS) + "\n")
        for rep in reports:
            cells = [str(rep.neuron_index), repr(rep.frequency)]
            for obj in ("accuracy", "active_neurons", "auroc"):
                stats = rep.objective_stats[obj]
                if stats is None:
                    cells.extend([""] * 5)
                else:
                    cells.extend(repr(v) for v in stats)
            fh.write(",".join(cells) + "\n")


ZONE_CSV_HEADER = ("q_min,q_max,n_members,lo,hi,"
                   "member_min,member_q1,member_median,member_q3,member_max,"
                   "member_best,ensemble_value")


def write_zone_csv(path, zone_set: ZoneSet, rows: list[ZoneReportRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ZONE_CSV_HEADER + "\n")
        for zone, row in zip(zone_set.zones, rows):
            cells = [str(row.q_min), str(row.q_max), str(row.n_members),
                     repr(zone.lo), repr(zone.hi)]
            if row.member_summary is None:
                cells.extend([""] * 7)
            else:
                cells.extend(repr(v) for v in row.member_summary)
                cells.append(repr(row.member_best))
                cells.append(repr(row.ensemble_value))
            fh.write(",".join(cells) + "\n")
