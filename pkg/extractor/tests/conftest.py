"""Shared fixtures: one session-wide backbone and the criterion-shaped tree."""

from pathlib import Path

import pytest

from featx.backbone import load_backbone
from imagetree import make_image_tree


@pytest.fixture(scope="session")
def random_backbone():
    return load_backbone("resnet50", weights="random")


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory) -> Path:
    """3 classes x 10 images, the acceptance-criterion shape."""
    root = tmp_path_factory.mktemp("toy_images")
    return make_image_tree(root, {"cup": 10, "fork": 10, "spoon": 10}, seed=7)
