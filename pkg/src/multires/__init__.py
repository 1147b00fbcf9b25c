"""Multi-resolution detection toolkit.

Frequency-domain Gaussian resolution pyramids, multi-model detection fusion
by non-maximum suppression, and VOC-style mAP evaluation across resolution
levels, driven by a seeded synthetic detector.
"""

from multires.errors import (
    CapViolationError,
    DecodeError,
    InvalidCutoffError,
    InvalidInputError,
    MultiresError,
    NotFoundError,
    ParseError,
    SchemaError,
    UnsupportedFormatError,
)
from multires.spectral import FULL, PlanarImage, ResolutionLevel, SpectralFilter

__version__ = "0.1.0"

__all__ = [
    "CapViolationError",
    "DecodeError",
    "FULL",
    "InvalidCutoffError",
    "InvalidInputError",
    "MultiresError",
    "NotFoundError",
    "ParseError",
    "PlanarImage",
    "ResolutionLevel",
    "SchemaError",
    "SpectralFilter",
    "UnsupportedFormatError",
]
