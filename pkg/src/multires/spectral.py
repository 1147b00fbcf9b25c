"""Frequency-domain Gaussian low-pass filtering and resolution pyramids.

A resolution level ``R(c)`` band-limits an image with a Gaussian gain surface
whose standard deviation (the cutoff, in cycles per image) is ``c * S / 20``
with ``S`` the longer image side. Pixel dimensions never change.

Frequencies are signed integers ``u in [-(h//2), ceil(h/2) - 1]`` (rows) and
``v in [-(w//2), ceil(w/2) - 1]`` (columns). Gains are stored directly in the
unshifted DFT layout, so bin ``(u mod h, v mod w)`` holds the gain for
``(u, v)`` and no shift pass is needed when filtering.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import total_ordering
from typing import Optional, Sequence

import numpy as np

from multires.errors import InvalidCutoffError, InvalidInputError

N_LEVELS = 20
FULL_ORDINAL = N_LEVELS + 1


@total_ordering
@dataclass(frozen=True)
class ResolutionLevel:
    """Either ``R(c)`` for ``1 <= c <= 20`` or the unfiltered full spectrum.

    ``c is None`` denotes the full spectrum.
    """

    c: Optional[int] = None

    def __post_init__(self):
        if self.c is not None:
            if isinstance(self.c, bool) or not isinstance(self.c, int):
                raise InvalidInputError(f"level index must be an int, got {self.c!r}")
            if not 1 <= self.c <= N_LEVELS:
                raise InvalidInputError(f"level index must be in [1, {N_LEVELS}], got {self.c}")

    @classmethod
    def r(cls, c: int) -> "ResolutionLevel":
        return cls(c)

    @property
    def is_full(self) -> bool:
        return self.c is None

    @property
    def ordinal(self) -> int:
        return FULL_ORDINAL if self.c is None else self.c

    @property
    def label(self) -> str:
        return "Full" if self.c is None else f"R{self.c}"

    @classmethod
    def parse(cls, text: str) -> "ResolutionLevel":
        """Accepts ``5``, ``R5``, ``r5``, ``full``, ``Full``, ``21``."""
        s = str(text).strip()
        if s.lower() in ("full", "f", "full-spectrum"):
            return FULL
        m = re.fullmatch(r"[rR]?(\d+)", s)
        if not m:
            raise InvalidInputError(f"unrecognised resolution level {text!r}")
        c = int(m.group(1))
        if c == FULL_ORDINAL:
            return FULL
        return cls(c)

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "ResolutionLevel":
        return FULL if ordinal == FULL_ORDINAL else cls(ordinal)

    def __lt__(self, other):
        if not isinstance(other, ResolutionLevel):
            return NotImplemented
        return self.ordinal < other.ordinal

    def __str__(self):
        return self.label


FULL = ResolutionLevel(None)


def all_levels() -> list[ResolutionLevel]:
    """The 21 levels ``R1 .. R20, Full`` in ordinal order."""
    return [ResolutionLevel(c) for c in range(1, N_LEVELS + 1)] + [FULL]


def parse_levels(text: str) -> list[ResolutionLevel]:
    """Parse a comma-separated level list such as ``"5,10,18,20,full"``.

    ``"all"`` expands to all 21 levels.
    """
    if text.strip().lower() == "all":
        return all_levels()
    levels = [ResolutionLevel.parse(part) for part in text.split(",") if part.strip()]
    if not levels:
        raise InvalidInputError("empty level list")
    if len(set(levels)) != len(levels):
        raise InvalidInputError(f"duplicate levels in {text!r}")
    return levels


@dataclass
class PlanarImage:
    """An 8-bit image stored as a ``(channels, height, width)`` uint8 array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise InvalidInputError(f"expected 1 or 3 channels of 2D data, got shape {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise InvalidInputError(f"image dimensions must be >= 1, got {arr.shape[2]}x{arr.shape[1]}")
        if arr.dtype != np.uint8:
            if arr.size and (np.any(arr < 0) or np.any(arr > 255)):
                raise InvalidInputError("pixel values must lie in [0, 255]")
            if np.issubdtype(arr.dtype, np.floating) and np.any(arr != np.round(arr)):
                raise InvalidInputError("pixel values must be integers")
            arr = arr.astype(np.uint8)
        self.data = np.ascontiguousarray(arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def copy(self) -> "PlanarImage":
        return PlanarImage(self.data.copy())

    def __eq__(self, other):
        if not isinstance(other, PlanarImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))


def _as_grid(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise InvalidInputError(f"expected a 2D grid, got {arr.ndim} dimensions")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"grid dimensions must be >= 1, got {arr.shape}")
    return arr


def fft2d_forward(channel) -> np.ndarray:
    """Unnormalised 2D DFT of a real ``h x w`` grid (any size)."""
    return np.fft.fft2(_as_grid(channel).astype(np.float64))


def fft2d_inverse(grid) -> np.ndarray:
    """Normalised inverse 2D DFT; the imaginary residue is discarded."""
    return np.fft.ifft2(_as_grid(grid).astype(np.complex128)).real


def signed_frequencies(n: int) -> np.ndarray:
    """Integer frequency of each DFT bin along an axis of length ``n``."""
    return np.fft.fftfreq(n, d=1.0 / n).round().astype(np.int64)


def cutoff_for_level(level: ResolutionLevel, width: int, height: int) -> Optional[float]:
    """Cutoff ``c * max(w, h) / 20``, or ``None`` for the full spectrum."""
    if width < 1 or height < 1:
        raise InvalidInputError(f"image dimensions must be >= 1, got {width}x{height}")
    if level.is_full:
        return None
    return level.c * max(width, height) / N_LEVELS


@dataclass(frozen=True)
class SpectralFilter:
    width: int
    height: int
    cutoff: float
    gains: np.ndarray  # (height, width), unshifted DFT layout

    def gain(self, u: int, v: int) -> float:
        """Gain at signed frequency ``(u, v)``."""
        return float(self.gains[u % self.height, v % self.width])

    def centered(self) -> np.ndarray:
        """Gains with DC moved to the centre, for display."""
        return np.fft.fftshift(self.gains)


def build_filter(width: int, height: int, f_c: float) -> SpectralFilter:
    if not f_c > 0 or not math.isfinite(f_c):
        raise InvalidCutoffError(f"cutoff must be a positive finite number, got {f_c!r}")
    if width < 1 or height < 1:
        raise InvalidInputError(f"filter dimensions must be >= 1, got {width}x{height}")
    u = signed_frequencies(height).astype(np.float64)
    v = signed_frequencies(width).astype(np.float64)
    r2 = u[:, None] ** 2 + v[None, :] ** 2
    gains = np.exp(-r2 / (2.0 * f_c * f_c))
    gains.setflags(write=False)
    return SpectralFilter(width=width, height=height, cutoff=float(f_c), gains=gains)


def quantize(x: np.ndarray) -> np.ndarray:
    """Round half away from zero, clamp to [0, 255], return uint8."""
    rounded = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def filter_channel(channel, filt: SpectralFilter) -> np.ndarray:
    """Filter one channel without quantising (float result)."""
    return fft2d_inverse(fft2d_forward(channel) * filt.gains)


def apply_lowpass(img: PlanarImage, level: ResolutionLevel) -> PlanarImage:
    if level.is_full:
        return img.copy()
    f_c = cutoff_for_level(level, img.width, img.height)
    filt = build_filter(img.width, img.height, f_c)
    out = np.empty_like(img.data)
    for k in range(img.channels):
        out[k] = quantize(filter_channel(img.data[k], filt))
    return PlanarImage(out)


def generate_pyramid(
    img: PlanarImage, levels: Sequence[ResolutionLevel]
) -> list[tuple[ResolutionLevel, PlanarImage]]:
    levels = list(levels)
    if not levels:
        raise InvalidInputError("at least one level is required")
    if len(set(levels)) != len(levels):
        raise InvalidInputError("duplicate levels requested")
    return [(level, apply_lowpass(img, level)) for level in levels]


def spectral_energy(channel, include_dc: bool = False) -> float:
    """Sum of squared DFT magnitudes, DC excluded by default."""
    power = np.abs(fft2d_forward(channel)) ** 2
    total = float(power.sum())
    return total if include_dc else total - float(power[0, 0])


def total_variation(channel) -> float:
    x = np.asarray(channel, dtype=np.int64)
    return float(np.abs(np.diff(x, axis=0)).sum() + np.abs(np.diff(x, axis=1)).sum())

