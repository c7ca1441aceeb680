"""Budgeted steady-state multi-objective search over pruning masks.

Each iteration draws two parents by binary tournament, recombines them with
uniform crossover, mutates per gene, evaluates the two offspring (a full
training run each unless the mask was seen before), and merges them back
through nondominated-sorting environmental selection. The budget counts
trainings, not iterations; cache hits are free. An archive of nondominated
evaluations and its hypervolume trace are maintained for reporting.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .datamodel import (
    ArchSpec,
    EvolutionConfig,
    FeatureDataset,
    Individual,
    ObjectiveVector,
    PruningMask,
    active_count,
    dominates,
)
from .ood import OodPool, build_ood_pool, score_model
from .trainer import accuracy, decode, train_head

# spawn-key tags for deriving independent per-run random streams
_INIT_TAG = 0
_POOL_TAG = 1
_LOOP_TAG = 2
_EVAL_TAG = 3
ENSEMBLE_POOL_TAG = 4

# iterations tolerated without any budget-consuming evaluation before the
# run aborts; only reachable when nearly every possible mask is cached
_STAGNATION_LIMIT = 10_000


def derive_seed(*parts: int) -> int:
    """Collapse a tuple of non-negative integers into one 64-bit seed.

    The length prefix keeps tuples with trailing zeros apart; raw
    SeedSequence entropy treats (x,) and (x, 0) as the same pool.
    """
    ss = np.random.SeedSequence([len(parts), *parts])
    a, b = ss.generate_state(2)
    return (int(a) << 32) | int(b)


def eval_seed(master_seed: int, run_id: int, eval_index: int) -> int:
    """Training seed for one budget-consuming evaluation. Depends only on
    the run's identity and the evaluation's position, never on timing."""
    return derive_seed(master_seed, run_id, _EVAL_TAG, eval_index)


@dataclass
class RankedPopulation:
    """A population with its nondominated fronts and crowding distances."""

    individuals: list[Individual]
    fronts: tuple[tuple[int, ...], ...]
    crowding: np.ndarray
    ranks: np.ndarray


@dataclass
class EvalRecord:
    """One line of the run log. Cache hits reuse the index of the original
    evaluation that produced the objectives."""

    eval_index: int
    mask_hex: str
    accuracy: float
    active_neurons: int
    auroc: float
    cache_hit: bool

    def to_line(self) -> str:
        return ",".join([
            str(self.eval_index),
            self.mask_hex,
            repr(self.accuracy),
            str(self.active_neurons),
            repr(self.auroc),
            "1" if self.cache_hit else "0",
        ])

    @classmethod
    def from_line(cls, line: str) -> "EvalRecord":
        parts = line.strip().split(",")
        if len(parts) != 6:
            raise ValueError(f"bad log line: {line!r}")
        return cls(
            eval_index=int(parts[0]),
            mask_hex=parts[1],
            accuracy=float(parts[2]),
            active_neurons=int(parts[3]),
            auroc=float(parts[4]),
            cache_hit=parts[5] == "1",
        )


LOG_HEADER = "eval_index,mask_hex,accuracy,active_neurons,auroc,cache_hit"


@dataclass
class RunResult:
    """Everything one run produced."""

    run_id: int
    seed: int
    all_evaluated: list[Individual]
    final_population: RankedPopulation
    archive_front: list[Individual]
    eval_count: int
    hypervolume_trace: list[tuple[int, float]]
    log: list[EvalRecord]


def initialize_population(cfg: EvolutionConfig, feature_dim: int,
                          seed: int) -> list[PruningMask]:
    """population_size masks with each gene an independent fair coin flip."""
    rng = np.random.default_rng(seed)
    draws = rng.random((cfg.population_size, feature_dim))
    return [PruningMask((row < 0.5).astype(np.uint8)) for row in draws]


def fast_nondominated_sort(objectives: list[ObjectiveVector]) -> list[list[int]]:
    """Partition indices into fronts: front 0 is nondominated, front k+1 is
    nondominated once fronts 0..k are removed. Index order is preserved
    inside each front."""
    n = len(objectives)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    dom_count = [0] * n
    fronts: list[list[int]] = [[]]
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(objectives[i], objectives[j]):
                dominated_by[i].append(j)
                dom_count[j] += 1
            elif dominates(objectives[j], objectives[i]):
                dominated_by[j].append(i)
                dom_count[i] += 1
    for i in range(n):
        if dom_count[i] == 0:
            fronts[0].append(i)
    k = 0
    while fronts[k]:
        nxt: list[int] = []
        for i in fronts[k]:
            for j in dominated_by[i]:
                dom_count[j] -= 1
                if dom_count[j] == 0:
                    nxt.append(j)
        k += 1
        fronts.append(sorted(nxt))
    fronts.pop()
    return fronts


def crowding_distance(front_objectives: list[ObjectiveVector]) -> np.ndarray:
    """Per-member crowding distance within one front. Boundary members of
    every objective get the infinity sentinel; fronts of one or two members
    are all infinite. An objective with zero range contributes nothing."""
    n = len(front_objectives)
    if n == 0:
        raise ValueError("empty front")
    if n <= 2:
        return np.full(n, np.inf)
    values = np.array([o.as_tuple() for o in front_objectives], dtype=np.float64)
    dist = np.zeros(n)
    for m in range(values.shape[1]):
        order = np.argsort(values[:, m], kind="stable")
        col = values[order, m]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def rank_population(individuals: list[Individual]) -> RankedPopulation:
    """Sort a fully evaluated population into fronts and attach crowding."""
    objs = []
    for ind in individuals:
        if ind.objectives is None:
            raise ValueError("population member lacks objectives")
        objs.append(ind.objectives)
    fronts = fast_nondominated_sort(objs)
    crowding = np.zeros(len(individuals))
    ranks = np.zeros(len(individuals), dtype=np.int64)
    for rank, front in enumerate(fronts):
        local = crowding_distance([objs[i] for i in front])
        for pos, i in enumerate(front):
            crowding[i] = local[pos]
            ranks[i] = rank
    return RankedPopulation(
        individuals=list(individuals),
        fronts=tuple(tuple(f) for f in fronts),
        crowding=crowding,
        ranks=ranks,
    )


def binary_tournament(pop: RankedPopulation, rng: np.random.Generator) -> Individual:
    """Draw two members uniformly with replacement; prefer the lower front
    rank, then the larger crowding distance, then the first drawn."""
    n = len(pop.individuals)
    i, j = (int(v) for v in rng.integers(0, n, size=2))
    if pop.ranks[j] < pop.ranks[i]:
        return pop.individuals[j]
    if pop.ranks[j] == pop.ranks[i] and pop.crowding[j] > pop.crowding[i]:
        return pop.individuals[j]
    return pop.individuals[i]


def uniform_crossover(p: PruningMask, q: PruningMask,
                      rng: np.random.Generator) -> tuple[PruningMask, PruningMask]:
    """Per gene, one fresh uniform draw r: the first child takes p's gene
    when r <= 0.5 and q's otherwise; the second child takes the complement
    using the same r."""
    if len(p) != len(q):
        raise ValueError("parents must share mask length")
    take_p = rng.random(len(p)) <= 0.5
    c1 = np.where(take_p, p.bits, q.bits).astype(np.uint8)
    c2 = np.where(take_p, q.bits, p.bits).astype(np.uint8)
    return PruningMask(c1), PruningMask(c2)


def bit_flip_mutation(mask: PruningMask, p_mut: float,
                      rng: np.random.Generator) -> PruningMask:
    """Flip each gene independently with probability p_mut."""
    if not (0.0 <= p_mut <= 1.0):
        raise ValueError("p_mut must lie in [0, 1]")
    flips = rng.random(len(mask)) < p_mut
    return PruningMask(np.where(flips, 1 - mask.bits, mask.bits).astype(np.uint8))


class Evaluator:
    """Trains and scores masks against one dataset and OoD pool, caching
    objectives by exact mask bits so revisited chromosomes cost nothing."""

    def __init__(self, dataset: FeatureDataset, pool: OodPool, arch: ArchSpec,
                 cfg: EvolutionConfig) -> None:
        if len(dataset.train) == 0 or len(dataset.test) == 0:
            raise ValueError("InD dataset needs non-empty train and test splits")
        self.dataset = dataset
        self.pool = pool
        self.arch = arch
        self.cfg = cfg
        self.cache: dict[bytes, tuple[ObjectiveVector, int]] = {}
        self.hits = 0
        self.misses = 0

    def lookup(self, mask: PruningMask) -> tuple[ObjectiveVector, int] | None:
        return self.cache.get(mask.key)

    def evaluate_fresh(self, mask: PruningMask, eval_index: int,
                       sub_seed: int) -> ObjectiveVector:
        decode_seed, train_seed = _split_seed(sub_seed)
        head = decode(mask, self.arch, decode_seed)
        trained = train_head(head, self.dataset.train, self.cfg, train_seed)
        acc = accuracy(trained, self.dataset.test)
        auc, _, _ = score_model(trained, self.dataset.test, self.pool,
                                self.cfg.odin_temperature)
        obj = ObjectiveVector(acc, active_count(mask), auc)
        self.cache[mask.key] = (obj, eval_index)
        self.misses += 1
        return obj

    def evaluate(self, mask: PruningMask, eval_index: int,
                 sub_seed: int) -> tuple[ObjectiveVector, bool]:
        cached = self.lookup(mask)
        if cached is not None:
            self.hits += 1
            return cached[0], True
        return self.evaluate_fresh(mask, eval_index, sub_seed), False


def _split_seed(sub_seed: int) -> tuple[int, int]:
    a, b, c, d = np.random.SeedSequence(sub_seed).generate_state(4)
    return (int(a) << 32) | int(b), (int(c) << 32) | int(d)


def rematerialize_head(mask: PruningMask, ind: FeatureDataset,
                       cfg: EvolutionConfig, master_seed: int, run_id: int,
                       eval_index: int):
    """Retrain the exact head one evaluation produced. Heads are never
    persisted; the (mask, seed) pair reproduces them bit for bit."""
    arch = ArchSpec(ind.feature_dim, cfg.hidden_units, ind.num_classes)
    decode_seed, train_seed = _split_seed(eval_seed(master_seed, run_id, eval_index))
    return train_head(decode(mask, arch, decode_seed), ind.train, cfg, train_seed)


def evaluate_individual(mask: PruningMask, ind: FeatureDataset, pool: OodPool,
                        cfg: EvolutionConfig, sub_seed: int,
                        cache: dict[bytes, ObjectiveVector] | None = None
                        ) -> ObjectiveVector:
    """One-off objective evaluation: decode, train, score.

    With a cache supplied, a mask seen before returns the stored vector
    without retraining.
    """
    if cache is not None and mask.key in cache:
        return cache[mask.key]
    arch = ArchSpec(ind.feature_dim, cfg.hidden_units, ind.num_classes)
    decode_seed, train_seed = _split_seed(sub_seed)
    head = decode(mask, arch, decode_seed)
    trained = train_head(head, ind.train, cfg, train_seed)
    acc = accuracy(trained, ind.test)
    auc, _, _ = score_model(trained, ind.test, pool, cfg.odin_temperature)
    obj = ObjectiveVector(acc, active_count(mask), auc)
    if cache is not None:
        cache[mask.key] = obj
    return obj


def environmental_selection(objectives: list[ObjectiveVector], target_size: int,
                            eval_order: list[int] | None = None) -> list[int]:
    """Indices of the survivors: whole fronts in rank order, then the final
    front truncated by descending crowding distance with ties broken by
    eval_order (older, i.e. smaller, first)."""
    n = len(objectives)
    if target_size < 0 or target_size > n:
        raise ValueError(f"cannot select {target_size} from {n} candidates")
    if eval_order is None:
        eval_order = list(range(n))
    selected: list[int] = []
    for front in fast_nondominated_sort(objectives):
        if len(selected) + len(front) <= target_size:
            selected.extend(front)
            if len(selected) == target_size:
                break
            continue
        need = target_size - len(selected)
        crowd = crowding_distance([objectives[i] for i in front])
        order = sorted(range(len(front)),
                       key=lambda k: (-crowd[k], eval_order[front[k]]))
        selected.extend(front[k] for k in order[:need])
        break
    return selected


def _staircase_area(points: list[tuple[float, float]]) -> float:
    """Area of the union of origin-anchored rectangles [0,x] x [0,y]."""
    area = 0.0
    ceiling = 0.0
    for x, y in sorted(points, key=lambda p: (-p[0], -p[1])):
        if y > ceiling:
            area += x * (y - ceiling)
            ceiling = y
    return area


def hypervolume(objectives: list[ObjectiveVector], feature_dim: int) -> float:
    """Dominated volume in normalized maximization space.

    Coordinates are (accuracy, 1 - active_neurons / P, auroc) against the
    worst-case reference point at the origin, so the result lives in
    [0, 1]. Sweeps the third axis top-down, accumulating staircase areas.
    """
    if feature_dim <= 0:
        raise ValueError("feature_dim must be positive")
    if not objectives:
        return 0.0
    pts = [
        (o.accuracy, 1.0 - o.active_neurons / feature_dim, o.auroc)
        for o in objectives
    ]
    pts.sort(key=lambda p: -p[2])
    volume = 0.0
    active: list[tuple[float, float]] = []
    prev_z = pts[0][2]
    for x, y, z in pts:
        if z < prev_z:
            volume += _staircase_area(active) * (prev_z - z)
            prev_z = z
        active.append((x, y))
    volume += _staircase_area(active) * prev_z
    return volume


def _archive_insert(archive: list[Individual], candidate: Individual) -> None:
    assert candidate.objectives is not None
    for kept in archive:
        if dominates(kept.objectives, candidate.objectives):
            return
    archive[:] = [
        kept for kept in archive
        if not dominates(candidate.objectives, kept.objectives)
    ]
    archive.append(candidate)


def evolve(cfg: EvolutionConfig, ind: FeatureDataset,
           ood_datasets: list[FeatureDataset], run_id: int = 0) -> RunResult:
    """One complete run. Deterministic for a fixed (config, data, run_id):
    every random stream derives from the master seed and the run id, and
    each evaluation's training seed derives from its evaluation index."""
    cfg.validate()
    feature_dim = ind.feature_dim
    arch = ArchSpec(feature_dim, cfg.hidden_units, ind.num_classes)
    p_mut = cfg.mutation_prob_for(feature_dim)
    pool = build_ood_pool(
        ood_datasets,
        cfg.ood_count_for(len(ind.test), len(ood_datasets)),
        derive_seed(cfg.master_seed, run_id, _POOL_TAG),
    )
    evaluator = Evaluator(ind, pool, arch, cfg)
    loop_rng = np.random.default_rng(derive_seed(cfg.master_seed, run_id, _LOOP_TAG))

    all_evaluated: list[Individual] = []
    log: list[EvalRecord] = []
    archive: list[Individual] = []
    hv_trace: list[tuple[int, float]] = []
    budget_used = 0
    trained_count = 0

    def submit(mask: PruningMask, counts_budget: bool = True) -> Individual:
        nonlocal budget_used, trained_count
        cached = evaluator.lookup(mask)
        if cached is not None:
            obj, origin_index = cached
            evaluator.hits += 1
            log.append(EvalRecord(origin_index, mask.to_hex(), obj.accuracy,
                                  obj.active_neurons, obj.auroc, True))
            return Individual(mask, obj, origin_index, run_id)
        idx = trained_count
        obj = evaluator.evaluate_fresh(mask, idx,
                                       eval_seed(cfg.master_seed, run_id, idx))
        trained_count += 1
        if counts_budget:
            budget_used += 1
        member = Individual(mask, obj, idx, run_id)
        all_evaluated.append(member)
        _archive_insert(archive, member)
        hv_trace.append((idx, hypervolume([m.objectives for m in archive],
                                          feature_dim)))
        log.append(EvalRecord(idx, mask.to_hex(), obj.accuracy,
                              obj.active_neurons, obj.auroc, False))
        return member

    init_seed = derive_seed(cfg.master_seed, run_id, _INIT_TAG)
    population = [
        submit(mask, counts_budget=cfg.count_initial_evals)
        for mask in initialize_population(cfg, feature_dim, init_seed)
    ]

    stagnant = 0
    while budget_used < cfg.max_evals:
        ranked = rank_population(population)
        parent_a = binary_tournament(ranked, loop_rng)
        parent_b = binary_tournament(ranked, loop_rng)
        child_a, child_b = uniform_crossover(parent_a.mask, parent_b.mask, loop_rng)
        offspring_masks = [
            bit_flip_mutation(child_a, p_mut, loop_rng),
            bit_flip_mutation(child_b, p_mut, loop_rng),
        ]
        before = budget_used
        offspring: list[Individual] = []
        for mask in offspring_masks:
            if evaluator.lookup(mask) is None and budget_used >= cfg.max_evals:
                continue  # would need a training the budget no longer covers
            offspring.append(submit(mask))
        if budget_used == before:
            stagnant += 1
            if stagnant > _STAGNATION_LIMIT:
                warnings.warn(
                    "evaluation budget stalled on cached chromosomes; "
                    "stopping the run early",
                    RuntimeWarning,
                    stacklevel=2,
                )
                break
        else:
            stagnant = 0
        combined = population + offspring
        keep = environmental_selection(
            [m.objectives for m in combined],
            cfg.population_size,
            [m.eval_index for m in combined],
        )
        population = [combined[k] for k in keep]

    return RunResult(
        run_id=run_id,
        seed=cfg.master_seed,
        all_evaluated=all_evaluated,
        final_population=rank_population(population),
        archive_front=sorted(archive, key=lambda m: m.eval_index),
        eval_count=budget_used,
        hypervolume_trace=hv_trace,
        log=log,
    )
