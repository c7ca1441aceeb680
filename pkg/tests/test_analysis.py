"""Super fronts, extreme slices, neuron reports, zones, and ensembles."""

from __future__ import annotations

import numpy as np
import pytest

from moprune.analysis import (
    ZONE_BOUNDS,
    FrontSolution,
    SuperFront,
    Zone,
    ZoneCandidate,
    ZoneSet,
    ensemble_accuracy,
    ensemble_auroc,
    ensemble_predict,
    ensemble_probabilities,
    nearest_rank_percentile,
    neuron_activation_counts,
    neuron_frequency,
    objective_extremes_slice,
    quantile_ensemble_zones,
    read_front_csv,
    super_front_from_solutions,
    super_pareto,
    write_extremes_csv,
    write_front_csv,
    write_neuron_csv,
    write_zone_csv,
    zone_report,
)
from moprune.datamodel import (
    ArchSpec,
    EvolutionConfig,
    ObjectiveVector,
    PruningMask,
    Split,
    dominates,
)
from moprune.moea import RunResult, evolve
from moprune.ood import OodPool, score_model
from moprune.trainer import accuracy, decode

from corpora import tiny_pair


def _mask_of(value: int, p: int = 8) -> PruningMask:
    bits = np.array([(value >> (p - 1 - i)) & 1 for i in range(p)], dtype=np.uint8)
    return PruningMask(bits)


def _sol(acc, act, auc, run_id=0, eval_index=0, mask=None):
    return FrontSolution(
        mask=mask if mask is not None else _mask_of(eval_index + run_id * 37),
        objectives=ObjectiveVector(acc, act, auc),
        run_id=run_id,
        eval_index=eval_index,
    )


def _front(solutions):
    return SuperFront(solutions=tuple(solutions), source_run_count=1)


# ---------------------------------------------------------------------------
# super front


def test_super_front_drops_dominated_solutions():
    a = _sol(0.9, 2, 0.9, eval_index=0)
    b = _sol(0.5, 5, 0.5, eval_index=1)  # dominated by a
    c = _sol(0.95, 3, 0.8, eval_index=2)  # trades against a
    front = super_front_from_solutions([a, b, c], source_run_count=2)
    assert front.solutions == (a, c)
    assert front.source_run_count == 2


def test_super_front_first_duplicate_mask_wins():
    shared = _mask_of(0b10110001)
    early = _sol(0.9, 4, 0.9, run_id=0, eval_index=3, mask=shared)
    late = _sol(0.9, 4, 0.9, run_id=1, eval_index=0, mask=shared)
    front = super_front_from_solutions([late, early], source_run_count=2)
    assert len(front.solutions) == 1
    assert front.solutions[0] is early  # run 0 evaluated it first


def test_super_front_keeps_equal_objectives_with_distinct_masks():
    a = _sol(0.9, 4, 0.9, eval_index=0, mask=_mask_of(0b11110000))
    b = _sol(0.9, 4, 0.9, eval_index=1, mask=_mask_of(0b00001111))
    front = super_front_from_solutions([a, b], source_run_count=1)
    assert front.solutions == (a, b)


def test_super_front_orders_by_run_then_eval_index():
    a = _sol(0.9, 2, 0.9, run_id=1, eval_index=0)
    b = _sol(0.91, 3, 0.91, run_id=0, eval_index=5)
    front = super_front_from_solutions([a, b], source_run_count=2)
    assert front.solutions == (b, a)


def _stub_run(run_id, archive):
    return RunResult(
        run_id=run_id, seed=0, all_evaluated=[], final_population=None,
        archive_front=archive, eval_count=0, hypervolume_trace=[], log=[],
    )


def test_super_pareto_unions_run_archives():
    from moprune.datamodel import Individual

    a = Individual(_mask_of(0b11000000), ObjectiveVector(0.9, 2, 0.9), 0, 0)
    b = Individual(_mask_of(0b00000011), ObjectiveVector(0.5, 5, 0.5), 1, 1)
    front = super_pareto([_stub_run(0, [a]), _stub_run(1, [b])])
    assert len(front.solutions) == 1  # b is dominated across runs
    assert front.source_run_count == 2
    with pytest.raises(ValueError):
        super_pareto([])


def test_union_of_real_runs_is_mutually_nondominating():
    ind, ood = tiny_pair()
    cfg = EvolutionConfig(max_evals=8, population_size=4, max_epochs=10,
                          hidden_units=8, master_seed=3)
    runs = [evolve(cfg, ind, [ood], run_id=r) for r in range(2)]
    front = super_pareto(runs)
    sols = front.solutions
    for i in range(len(sols)):
        for j in range(len(sols)):
            if i != j:
                assert not dominates(sols[i].objectives, sols[j].objectives)
    # every solution's mask is unique
    assert len({s.mask.key for s in sols}) == len(sols)


# ---------------------------------------------------------------------------
# extreme slices


def _ladder(n):
    # nondominated ladder with distinct values in every objective
    return [
        _sol(0.5 + 0.4 * i / n, 2 + i, 0.9 - 0.3 * i / n, eval_index=i)
        for i in range(n)
    ]


def test_extremes_take_ceil_of_fraction():
    front = _front(_ladder(13))
    for objective in ("accuracy", "active_neurons", "auroc"):
        assert len(objective_extremes_slice(front, objective, 0.10)) == 2
    assert len(objective_extremes_slice(_front(_ladder(10)), "accuracy", 0.10)) == 1
    assert len(objective_extremes_slice(_front(_ladder(3)), "accuracy", 1.0)) == 3


def test_extremes_pick_each_objectives_best_end():
    front = _front(_ladder(10))
    best_acc = objective_extremes_slice(front, "accuracy", 0.10)[0]
    best_act = objective_extremes_slice(front, "active_neurons", 0.10)[0]
    best_auc = objective_extremes_slice(front, "auroc", 0.10)[0]
    assert best_acc.objectives.accuracy == max(
        s.objectives.accuracy for s in front.solutions
    )
    assert best_act.objectives.active_neurons == min(
        s.objectives.active_neurons for s in front.solutions
    )
    assert best_auc.objectives.auroc == max(
        s.objectives.auroc for s in front.solutions
    )


def test_extremes_break_ties_by_evaluation_order():
    tied = [
        _sol(0.9, 2 + i, 0.5, run_id=1 - i % 2, eval_index=i, mask=_mask_of(i + 1))
        for i in range(4)
    ]
    got = objective_extremes_slice(_front(tied), "accuracy", 0.5)
    # all accuracies tie at 0.9; (run_id, eval_index) settles the order
    assert [(s.run_id, s.eval_index) for s in got] == [(0, 1), (0, 3)]


def test_extremes_validate_inputs():
    front = _front(_ladder(5))
    with pytest.raises(ValueError):
        objective_extremes_slice(front, "sharpness", 0.1)
    with pytest.raises(ValueError):
        objective_extremes_slice(front, "accuracy", 0.0)
    with pytest.raises(ValueError):
        objective_extremes_slice(front, "accuracy", 1.5)
    empty = SuperFront(solutions=(), source_run_count=0)
    assert objective_extremes_slice(empty, "accuracy", 0.1) == []


# ---------------------------------------------------------------------------
# neuron reports


def test_neuron_counts_hand_case():
    sols = [
        _sol(0.9, 2, 0.9, eval_index=0, mask=_mask_of(0b1100, 4)),
        _sol(0.8, 3, 0.8, eval_index=1, mask=_mask_of(0b1010, 4)),
        _sol(0.7, 1, 0.7, eval_index=2, mask=_mask_of(0b1000, 4)),
    ]
    counts = neuron_activation_counts(_front(sols))
    assert counts.tolist() == [3, 1, 1, 0]
    assert counts.sum() == sum(s.mask.bits.sum() for s in sols)


def test_neuron_counts_reject_empty_front():
    with pytest.raises(ValueError):
        neuron_activation_counts(SuperFront((), 0))


def test_neuron_frequency_orders_by_count_then_index():
    sols = [
        _sol(0.9, 2, 0.9, eval_index=0, mask=_mask_of(0b1100, 4)),
        _sol(0.8, 3, 0.8, eval_index=1, mask=_mask_of(0b0110, 4)),
        _sol(0.7, 1, 0.7, eval_index=2, mask=_mask_of(0b0100, 4)),
    ]
    reports = neuron_frequency(_front(sols), top_k=4)
    assert [r.neuron_index for r in reports] == [1, 0, 2, 3]
    assert [r.frequency for r in reports] == [1.0, 1 / 3, 1 / 3, 0.0]


def test_neuron_frequency_stats_cover_only_keepers():
    sols = [
        _sol(0.9, 2, 0.9, eval_index=0, mask=_mask_of(0b10, 2)),
        _sol(0.5, 1, 0.4, eval_index=1, mask=_mask_of(0b10, 2)),
    ]
    reports = neuron_frequency(_front(sols), top_k=2)
    kept = reports[0]
    assert kept.neuron_index == 0
    assert kept.objective_stats["accuracy"] == (0.5, 0.6, 0.7, 0.8, 0.9)
    never = reports[1]
    assert never.neuron_index == 1
    assert never.frequency == 0.0
    assert never.objective_stats["accuracy"] is None
    assert never.objective_stats["active_neurons"] is None
    assert never.objective_stats["auroc"] is None


def test_neuron_frequency_single_solution_five_numbers_collapse():
    sols = [_sol(0.9, 2, 0.7, eval_index=0, mask=_mask_of(0b11, 2))]
    rep = neuron_frequency(_front(sols), top_k=1)[0]
    assert rep.objective_stats["accuracy"] == (0.9,) * 5
    assert rep.objective_stats["auroc"] == (0.7,) * 5


def test_neuron_frequency_top_k_bounds():
    sols = [_sol(0.9, 2, 0.9, eval_index=0, mask=_mask_of(0b11, 2))]
    assert len(neuron_frequency(_front(sols), top_k=50)) == 2
    with pytest.raises(ValueError):
        neuron_frequency(_front(sols), top_k=0)


# ---------------------------------------------------------------------------
# percentiles and zones


def test_nearest_rank_percentile_hand_cases():
    vals = np.arange(1.0, 11.0)  # 1..10
    assert nearest_rank_percentile(vals, 50) == 5.0
    assert nearest_rank_percentile(vals, 95) == 10.0
    assert nearest_rank_percentile(vals, 100) == 10.0
    assert nearest_rank_percentile(vals, 1) == 1.0
    assert nearest_rank_percentile(vals, 10) == 1.0
    assert nearest_rank_percentile(vals, 10.1) == 2.0


def test_nearest_rank_on_exact_grid():
    vals = np.arange(1.0, 101.0)  # 1..100
    assert nearest_rank_percentile(vals, 50) == 50.0
    assert nearest_rank_percentile(vals, 60) == 60.0
    assert nearest_rank_percentile(vals, 85) == 85.0


def test_nearest_rank_single_value_and_validation():
    one = np.array([0.42])
    for q in (1, 50, 99, 100):
        assert nearest_rank_percentile(one, q) == 0.42
    with pytest.raises(ValueError):
        nearest_rank_percentile(np.array([]), 50)
    with pytest.raises(ValueError):
        nearest_rank_percentile(one, 0)
    with pytest.raises(ValueError):
        nearest_rank_percentile(one, 101)


def _candidates_from_values(values, metric="accuracy"):
    cands = []
    for i, v in enumerate(values):
        if metric == "accuracy":
            obj = ObjectiveVector(v, i, 0.5)
        else:
            obj = ObjectiveVector(0.5, i, v)
        cands.append(ZoneCandidate(
            solution=FrontSolution(_mask_of(i % 256), obj, 0, i), head=None,
        ))
    return cands


def test_zones_on_a_uniform_grid():
    values = [i / 100 for i in range(1, 101)]
    zones = quantile_ensemble_zones(_candidates_from_values(values), "accuracy")
    assert zones.metric == "accuracy"
    assert len(zones.zones) == 8
    z = zones.zones[0]
    assert (z.q_min, z.q_max) == (50, 60)
    assert (z.lo, z.hi) == (0.50, 0.60)
    assert len(z.members) == 11  # inclusive ends: 0.50 .. 0.60
    top = zones.zones[-1]
    assert (top.lo, top.hi) == (0.85, 0.95)
    assert len(top.members) == 11


def test_zone_bounds_follow_the_metric_choice():
    values = [i / 10 for i in range(1, 11)]
    zones = quantile_ensemble_zones(
        _candidates_from_values(values, metric="auroc"), "auroc"
    )
    assert zones.zones[0].lo == 0.5
    # stored accuracy is flat at 0.5 and must not drive the buckets
    assert all(z.lo <= z.hi for z in zones.zones)


def test_zone_lower_bounds_never_decrease():
    rng = np.random.default_rng(0)
    values = rng.random(37).tolist()
    zones = quantile_ensemble_zones(_candidates_from_values(values), "accuracy")
    lows = [z.lo for z in zones.zones]
    highs = [z.hi for z in zones.zones]
    assert lows == sorted(lows)
    assert highs == sorted(highs)


def test_single_candidate_lands_in_every_zone():
    zones = quantile_ensemble_zones(_candidates_from_values([0.7]), "accuracy")
    for z in zones.zones:
        assert z.lo == z.hi == 0.7
        assert len(z.members) == 1


def test_zones_validate_inputs():
    with pytest.raises(ValueError):
        quantile_ensemble_zones([], "accuracy")
    with pytest.raises(ValueError):
        quantile_ensemble_zones(_candidates_from_values([0.5]), "sharpness")


# ---------------------------------------------------------------------------
# ensembles


def _tiny_heads(n, p=6, y=3):
    arch = ArchSpec(p, 4, y)
    return [decode(PruningMask.ones(p), arch, seed=s) for s in range(n)]


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def test_single_member_probabilities_are_plain_softmax():
    (head,) = _tiny_heads(1)
    rng = np.random.default_rng(0)
    x = rng.normal(size=6)
    from moprune.trainer import predict_logits

    probs = ensemble_probabilities([head], x)
    np.testing.assert_allclose(probs, _softmax(predict_logits(head, x)), atol=1e-15)
    assert probs.shape == (3,)


def test_ensemble_probabilities_average_members():
    heads = _tiny_heads(3)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, 6))
    from moprune.trainer import predict_logits

    probs = ensemble_probabilities(heads, x)
    manual = np.mean(
        [
            np.apply_along_axis(_softmax, 1, predict_logits(h, x))
            for h in heads
        ],
        axis=0,
    )
    np.testing.assert_allclose(probs, manual, atol=1e-14)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_ensemble_predict_and_accuracy():
    heads = _tiny_heads(2)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(8, 6))
    preds = ensemble_predict(heads, x)
    assert preds.shape == (8,)
    assert isinstance(ensemble_predict(heads, x[0]), int)
    split = Split(x, preds.astype(np.int64))
    assert ensemble_accuracy(heads, split) == 1.0


def test_ensemble_auroc_single_member_matches_score_model():
    (head,) = _tiny_heads(1)
    rng = np.random.default_rng(3)
    split = Split(rng.normal(size=(10, 6)), np.zeros(10, dtype=np.int64))
    pool = OodPool(("z",), rng.normal(size=(12, 6)) + 3.0, 12, (12,))
    lone = ensemble_auroc([head], split, pool, temperature=1000.0)
    direct, _, _ = score_model(head, split, pool, temperature=1000.0)
    assert lone == direct


def test_ensemble_rejects_empty_member_list():
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError):
        ensemble_probabilities([], rng.normal(size=(3, 6)))
    split = Split(rng.normal(size=(3, 6)), np.zeros(3, dtype=np.int64))
    pool = OodPool(("z",), rng.normal(size=(3, 6)), 3, (3,))
    with pytest.raises(ValueError):
        ensemble_auroc([], split, pool, temperature=10.0)


# ---------------------------------------------------------------------------
# zone reports


def _real_candidates(values, heads):
    cands = []
    for i, (v, h) in enumerate(zip(values, heads)):
        sol = FrontSolution(h.mask, ObjectiveVector(v, i + 1, 0.5), 0, i)
        cands.append(ZoneCandidate(solution=sol, head=h))
    return cands


def test_zone_report_single_member_zone_reproduces_member():
    heads = _tiny_heads(1)
    rng = np.random.default_rng(5)
    split = Split(rng.normal(size=(12, 6)), rng.integers(0, 3, size=12))
    pool = OodPool(("z",), rng.normal(size=(10, 6)), 10, (10,))
    cfg = EvolutionConfig()
    zones = quantile_ensemble_zones(_real_candidates([0.8], heads), "accuracy")
    rows = zone_report(zones, split, pool, cfg)
    member_value = accuracy(heads[0], split)
    for row in rows:
        assert row.n_members == 1
        assert row.ensemble_value == member_value
        assert row.member_best == member_value
        assert row.member_summary == (member_value,) * 5


def test_zone_report_fills_all_zone_rows():
    heads = _tiny_heads(5)
    rng = np.random.default_rng(6)
    split = Split(rng.normal(size=(15, 6)), rng.integers(0, 3, size=15))
    pool = OodPool(("z",), rng.normal(size=(10, 6)) + 2.0, 10, (10,))
    cfg = EvolutionConfig()
    values = [0.5, 0.6, 0.7, 0.8, 0.9]
    for metric in ("accuracy", "auroc"):
        zones = quantile_ensemble_zones(_real_candidates(values, heads), metric)
        rows = zone_report(zones, split, pool, cfg)
        assert len(rows) == 8
        for row, zone in zip(rows, zones.zones):
            assert row.n_members == len(zone.members) > 0
            assert row.member_best == row.member_summary[4]
            assert row.member_summary[0] <= row.member_summary[2] <= row.member_best
            assert row.ensemble_value is not None


def test_zone_report_handles_a_hand_built_empty_zone():
    rng = np.random.default_rng(7)
    split = Split(rng.normal(size=(5, 6)), np.zeros(5, dtype=np.int64))
    pool = OodPool(("z",), rng.normal(size=(5, 6)), 5, (5,))
    zone_set = ZoneSet(
        metric="accuracy",
        zones=(Zone(q_min=50, q_max=60, lo=0.5, hi=0.6, members=()),),
    )
    rows = zone_report(zone_set, split, pool, EvolutionConfig())
    assert rows == [
        type(rows[0])(q_min=50, q_max=60, n_members=0, member_summary=None,
                      member_best=None, ensemble_value=None)
    ]


# ---------------------------------------------------------------------------
# report files


def test_front_csv_round_trip_and_stable_bytes(tmp_path):
    sols = _ladder(5)
    path = tmp_path / "front.csv"
    write_front_csv(path, sols)
    first = path.read_bytes()
    back = read_front_csv(path, feature_dim=8)
    assert [s.objectives for s in back] == [s.objectives for s in sols]
    assert [s.mask.key for s in back] == [s.mask.key for s in sols]
    assert [s.eval_index for s in back] == list(range(5))  # file order fallback
    write_front_csv(path, back)
    assert path.read_bytes() == first


def test_front_csv_eval_index_map_restores_provenance(tmp_path):
    sols = [_sol(0.9, 2, 0.9, run_id=1, eval_index=17, mask=_mask_of(0b1100, 4))]
    path = tmp_path / "front.csv"
    write_front_csv(path, sols)
    mapping = {(1, sols[0].mask.to_hex()): 17}
    back = read_front_csv(path, feature_dim=4, eval_indices=mapping)
    assert back[0].eval_index == 17
    assert back[0].run_id == 1


def test_front_csv_rejects_foreign_files(tmp_path):
    path = tmp_path / "front.csv"
    path.write_text("something,else\n1,2\n")
    with pytest.raises(ValueError):
        read_front_csv(path, feature_dim=4)


def test_extremes_csv_lists_objectives_alphabetically(tmp_path):
    sols = _ladder(3)
    path = tmp_path / "extremes.csv"
    write_extremes_csv(path, {
        "auroc": [sols[0]], "accuracy": [sols[1]], "active_neurons": [sols[2]],
    })
    lines = path.read_text().strip().split("\n")
    assert lines[0].startswith("objective,")
    firsts = [ln.split(",")[0] for ln in lines[1:]]
    assert firsts == ["accuracy", "active_neurons", "auroc"]


def test_neuron_csv_na_cells_for_unused_neurons(tmp_path):
    sols = [_sol(0.9, 2, 0.9, eval_index=0, mask=_mask_of(0b10, 2))]
    reports = neuron_frequency(_front(sols), top_k=2)
    path = tmp_path / "neurons.csv"
    write_neuron_csv(path, reports)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 3
    assert lines[0].count(",") == 16  # index, frequency, 15 stat columns
    assert ",,,,," in lines[2]  # unused neuron carries empty stat cells


def test_zone_csv_writes_one_row_per_zone(tmp_path):
    heads = _tiny_heads(3)
    rng = np.random.default_rng(8)
    split = Split(rng.normal(size=(9, 6)), rng.integers(0, 3, size=9))
    pool = OodPool(("z",), rng.normal(size=(6, 6)), 6, (6,))
    zones = quantile_ensemble_zones(
        _real_candidates([0.5, 0.7, 0.9], heads), "accuracy"
    )
    rows = zone_report(zones, split, pool, EvolutionConfig())
    path = tmp_path / "zones.csv"
    write_zone_csv(path, zones, rows)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 9
    assert lines[0].split(",")[:3] == ["q_min", "q_max", "n_members"]
    assert lines[1].split(",")[0] == "50"
