"""Shared fixtures: tiny deterministic corpora that train in milliseconds."""

from __future__ import annotations

import pytest

from corpora import TINY_P, TINY_Y, tiny_pair
from moprune.datamodel import ArchSpec, EvolutionConfig, FeatureDataset


@pytest.fixture(scope="session")
def tiny_ind_ood() -> tuple[FeatureDataset, FeatureDataset]:
    return tiny_pair()


@pytest.fixture()
def fast_cfg() -> EvolutionConfig:
    """Config sized for unit tests: small nets, short budgets."""
    return EvolutionConfig(
        max_evals=12,
        population_size=4,
        max_epochs=20,
        hidden_units=24,
        master_seed=11,
    )


@pytest.fixture()
def tiny_arch() -> ArchSpec:
    return ArchSpec(feature_dim=TINY_P, hidden_units=24, num_classes=TINY_Y)
