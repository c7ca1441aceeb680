"""Frozen convolutional backbones that map images to fixed-width feature rows.

The classifier layer is replaced with an identity so the model emits its
global-average-pooled features. Weights come from the standard published
checkpoint, a local state-dict file, or a seeded random draw for offline
and hermetic use; they are never fine-tuned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image

_BACKBONE_WIDTHS = {"resnet50": 2048}

# Canonical preprocessing of the backbone's pretraining corpus.
NORMALIZE_MEAN = (0.485, 0.456, 0.406)
NORMALIZE_STD = (0.229, 0.224, 0.225)

# Fixed so every invocation, today or later, draws the same random network;
# features from separately extracted datasets stay mutually comparable.
_RANDOM_WEIGHTS_SEED = 20480

_MODEL_CACHE: dict[tuple[str, str], torch.nn.Module] = {}


class BackboneError(Exception):
    """User-facing problem loading or identifying a backbone."""


@dataclass
class Backbone:
    """A loaded, frozen feature extractor."""

    name: str
    weights: str
    feature_dim: int
    model: torch.nn.Module = field(repr=False)


def _resnet50_module(weights: str) -> torch.nn.Module:
    from torchvision.models import resnet50

    if weights == "pretrained":
        from torchvision.models import ResNet50_Weights

        try:
            return resnet50(weights=ResNet50_Weights.IMAGENET1K_V1)
        except Exception as exc:
            raise BackboneError(
                f"could not fetch pretrained weights ({exc}); pass "
                "--weights random or a local state-dict file"
            ) from exc
    if weights == "random":
        # fork_rng keeps the seeded draw from disturbing the caller's RNG.
        with torch.random.fork_rng():
            torch.manual_seed(_RANDOM_WEIGHTS_SEED)
            return resnet50(weights=None)
    path = Path(weights)
    if not path.is_file():
        raise BackboneError(f"weights file not found: {path}")
    model = resnet50(weights=None)
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    except Exception as exc:
        raise BackboneError(f"bad weights file {path}: {exc}") from exc
    return model


def load_backbone(name: str = "resnet50", weights: str = "pretrained") -> Backbone:
    """Build a frozen backbone; symbolic weight sources are cached in-process."""
    if name not in _BACKBONE_WIDTHS:
        known = ", ".join(sorted(_BACKBONE_WIDTHS))
        raise BackboneError(f"unknown backbone: {name!r} (known: {known})")
    cache_key = (name, weights) if weights in ("pretrained", "random") else None
    model = _MODEL_CACHE.get(cache_key) if cache_key else None
    if model is None:
        model = _resnet50_module(weights)
        model.fc = torch.nn.Identity()
        model.eval()
        model.requires_grad_(False)
        if cache_key:
            _MODEL_CACHE[cache_key] = model
    return Backbone(name, weights, _BACKBONE_WIDTHS[name], model)


def preprocess(image: Image.Image, size: int) -> torch.Tensor:
    """RGB, bilinear square resize, [0,1] scale, channel standardization."""
    if size < 1:
        raise BackboneError(f"resize target must be positive, got {size}")
    img = image.convert("RGB").resize((size, size), Image.Resampling.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(NORMALIZE_MEAN, dtype=np.float32)) / np.asarray(
        NORMALIZE_STD, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def embed_images(
    backbone: Backbone, images: Sequence[Image.Image], size: int
) -> np.ndarray:
    """Run one batch through the frozen backbone; rows align with images."""
    if not images:
        raise BackboneError("embed_images needs at least one image")
    batch = torch.stack([preprocess(im, size) for im in images])
    with torch.inference_mode():
        feats = backbone.model(batch)
    return np.asarray(feats.cpu().numpy())
