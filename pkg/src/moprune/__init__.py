"""Evolutionary pruning of dense classifier heads with OoD-aware selection.

The library evolves binary masks over the feature inputs of a one-hidden-
layer classifier head, optimizing test accuracy, the number of active
inputs, and out-of-distribution detectability at the same time, and ships
analysis tooling for the resulting Pareto fronts.
"""

from .datamodel import (
    ArchSpec,
    EvolutionConfig,
    FeatsetError,
    FeatureDataset,
    Individual,
    ObjectiveVector,
    PruningMask,
    Split,
    active_count,
    dominates,
    load_feature_dataset,
    load_split_dataset,
    mem_ratio,
    save_featset,
)
from .trainer import TrainedHead, accuracy, decode, predict_logits, train_head
from .ood import OodPool, RocPoint, auroc, build_ood_pool, odin_score, roc_curve, score_model
from .moea import (
    EvalRecord,
    Evaluator,
    RankedPopulation,
    RunResult,
    binary_tournament,
    bit_flip_mutation,
    crowding_distance,
    environmental_selection,
    evaluate_individual,
    evolve,
    fast_nondominated_sort,
    hypervolume,
    initialize_population,
    uniform_crossover,
)
from .analysis import (
    NeuronReport,
    SuperFront,
    ensemble_auroc,
    ensemble_predict,
    neuron_frequency,
    objective_extremes_slice,
    quantile_ensemble_zones,
    super_pareto,
    zone_report,
)

__version__ = "0.1.0"
