"""Offline feature extraction: image folders in, labeled feature files out.

A frozen pretrained convolutional backbone turns every image into one
fixed-width feature row; rows are split into train/test files that the
mask-search CLI consumes directly.
"""

from .backbone import Backbone, BackboneError, load_backbone
from .extract import (
    ExtractError,
    ExtractionJob,
    ExtractionResult,
    ManifestError,
    emit_manifest,
    run_extraction,
)
from .folders import FolderError

__all__ = [
    "Backbone",
    "BackboneError",
    "ExtractError",
    "ExtractionJob",
    "ExtractionResult",
    "FolderError",
    "ManifestError",
    "emit_manifest",
    "load_backbone",
    "run_extraction",
]

__version__ = "0.1.0"
