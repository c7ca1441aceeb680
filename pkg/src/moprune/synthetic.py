"""Synthetic Gaussian feature corpora for desk-scale experiments and tests.

Class centers share a common radial offset plus mutually equidistant
components along random orthonormal directions, so the class signal is
spread over every coordinate instead of a handful of axes. The foreign
dataset displaces each center radially toward the origin; with the default
geometry (center norm equal to the shift) the foreign blobs sit at the
origin, where a head trained on the in-distribution classes produces
near-uniform logits.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .datamodel import FeatureDataset, Split, save_featset


def class_centers(feature_dim: int, num_classes: int, seed: int,
                  pairwise_distance: float = 6.0,
                  center_norm: float = 10.0) -> np.ndarray:
    """Centers with |c_i - c_j| == pairwise_distance for i != j and
    |c_k| == center_norm, oriented by a seeded random orthonormal basis."""
    if num_classes + 1 > feature_dim:
        raise ValueError("feature_dim too small for the requested class count")
    if center_norm ** 2 < pairwise_distance ** 2 / 2.0:
        raise ValueError("center_norm too small for the requested spacing")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((feature_dim, num_classes + 1)))
    radial = basis[:, 0]
    spread = basis[:, 1:]
    base = math.sqrt(center_norm ** 2 - pairwise_distance ** 2 / 2.0)
    # orthonormal spread vectors are sqrt(2) apart, scale to the target
    return base * radial[None, :] + (pairwise_distance / math.sqrt(2.0)) * spread.T


def shifted_centers(centers: np.ndarray, shift: float) -> np.ndarray:
    """Displace every center radially toward the origin by exactly
    `shift`. A shift equal to the center norm lands on the origin."""
    norms = np.linalg.norm(centers, axis=1)
    if (norms == 0).any():
        raise ValueError("cannot shift a center that sits at the origin")
    return centers * (1.0 - shift / norms)[:, None]


def _sample_blobs(centers: np.ndarray, n_rows: int, noise_sigma: float,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    num_classes, feature_dim = centers.shape
    y = rng.integers(0, num_classes, size=n_rows)
    x = centers[y] + rng.normal(0.0, noise_sigma, size=(n_rows, feature_dim))
    return x, y.astype(np.int64)


def gaussian_dataset(name: str, centers: np.ndarray, n_train: int, n_test: int,
                     seed: int, noise_sigma: float = 1.0) -> FeatureDataset:
    """Isotropic Gaussian blobs around the given class centers."""
    rng = np.random.default_rng(seed)
    train = _sample_blobs(centers, n_train, noise_sigma, rng)
    test = _sample_blobs(centers, n_test, noise_sigma, rng)
    return FeatureDataset(
        name=name,
        feature_dim=centers.shape[1],
        num_classes=centers.shape[0],
        train=Split(*train),
        test=Split(*test),
    )


def make_desk_corpus(out_dir: str | Path, seed: int = 7,
                     feature_dim: int = 64, num_classes: int = 3,
                     n_train: int = 300, n_test: int = 150,
                     pairwise_distance: float = 6.0,
                     ood_shift: float = 10.0) -> Path:
    """Write the desk-scale corpus: an InD train/test pair, one OoD set
    with every center shifted ood_shift away, and a run manifest.
    Returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    centers = class_centers(feature_dim, num_classes, seed,
                            pairwise_distance=pairwise_distance,
                            center_norm=ood_shift)
    ind = gaussian_dataset("ind", centers, n_train, n_test, seed=seed + 1)
    ood = gaussian_dataset("shifted", shifted_centers(centers, ood_shift),
                           n_train, n_test, seed=seed + 2)
    save_featset(out / "ind_train.featset", ind.train.x, ind.train.y, num_classes)
    save_featset(out / "ind_test.featset", ind.test.x, ind.test.y, num_classes)
    ood_rows = ood.all_features()
    ood_labels = np.concatenate([ood.train.y, ood.test.y])
    save_featset(out / "ood_shifted.featset", ood_rows, ood_labels, num_classes)
    manifest = out / "manifest.txt"
    with open(manifest, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("ind_train=ind_train.featset\n")
        fh.write("ind_test=ind_test.featset\n")
        fh.write("ood.shifted=ood_shifted.featset\n")
    return manifest
