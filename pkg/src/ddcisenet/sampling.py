"""Cartesian line undersampling: masks, mask application and the zero-filled baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .errors import ParameterError, ShapeError
from .fourier import ifft2c
from .tensor_core import as_complex_image, make_rng

__all__ = [
    "PATTERNS",
    "SamplingMask",
    "UndersampledSample",
    "center_columns",
    "make_mask",
    "apply_mask",
    "zero_fill_recon",
]

PATTERNS = ("random_lines", "equispaced")

Number = Union[int, float, Fraction]


@dataclass(frozen=True, eq=False)
class SamplingMask:
    width: int
    sampled_columns: np.ndarray  # bool, shape (width,)
    acceleration: Number
    center_fraction: float
    seed: int
    pattern: str = "random_lines"

    def __post_init__(self):
        cols = np.asarray(self.sampled_columns, dtype=bool)
        if cols.shape != (self.width,):
            raise ShapeError(f"mask length {cols.shape} does not match width {self.width}")
        cols.setflags(write=False)
        object.__setattr__(self, "sampled_columns", cols)

    @property
    def n_sampled(self) -> int:
        return int(self.sampled_columns.sum())

    def as_float(self) -> np.ndarray:
        """0/1 floats of shape (1, 1, W), the on-disk layout."""
        return self.sampled_columns.astype(np.float64).reshape(1, 1, self.width)

    @classmethod
    def from_columns(cls, columns, **meta) -> "SamplingMask":
        cols = np.asarray(columns).reshape(-1)
        if not np.all((cols == 0) | (cols == 1)):
            raise ShapeError("mask values must be 0 or 1")
        cols = cols.astype(bool)
        w = cols.size
        meta.setdefault("acceleration", w / max(int(cols.sum()), 1))
        meta.setdefault("center_fraction", 0.0)
        meta.setdefault("seed", 0)
        meta.setdefault("pattern", "random_lines")
        return cls(width=w, sampled_columns=cols, **meta)


@dataclass(eq=False)
class UndersampledSample:
    k_sparse: np.ndarray
    mask: SamplingMask
    k_full: Optional[np.ndarray] = None
    image_full: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def has_ground_truth(self) -> bool:
        return self.k_full is not None and self.image_full is not None


def _budget(width: int, acceleration: Number) -> int:
    # round half up; Python's round() is banker's rounding
    return int(math.floor(width / acceleration + 0.5))


def center_columns(width: int, center_fraction: float) -> np.ndarray:
    """Indices of the always-sampled low-frequency band centred at ``width // 2``."""
    n_center = int(math.floor(width * center_fraction))
    start = (width - n_center + 1) // 2
    return np.arange(start, start + n_center)


def make_mask(
    width: int,
    acceleration: Number = 4,
    center_fraction: float = 0.08,
    pattern: str = "random_lines",
    rng: Optional[np.random.Generator] = None,
    *,
    seed: int = 0,
) -> SamplingMask:
    """Build a column mask sampling ``round(width / acceleration)`` lines.

    The central ``floor(width * center_fraction)`` columns are always sampled; the
    rest of the budget goes either uniformly at random without replacement
    (``random_lines``) or evenly spaced over the non-centre columns (``equispaced``).
    If ``rng`` is omitted one is seeded from ``seed``.
    """
    if width <= 0 or width % 2:
        raise ParameterError(f"width must be positive and even, got {width}")
    if acceleration < 1:
        raise ParameterError(f"acceleration must be >= 1, got {acceleration}")
    if not 0 < center_fraction < 1:
        raise ParameterError(f"center_fraction must lie in (0, 1), got {center_fraction}")
    if pattern not in PATTERNS:
        raise ParameterError(f"unknown pattern {pattern!r}; expected one of {PATTERNS}")

    budget = _budget(width, acceleration)
    center = center_columns(width, center_fraction)
    if budget < center.size:
        raise ParameterError(
            f"sampling budget {budget} is smaller than the centre block of {center.size} columns"
        )
    cols = np.zeros(width, dtype=bool)
    cols[center] = True
    outer = np.flatnonzero(~cols)
    extra = budget - center.size
    if extra:
        if pattern == "random_lines":
            if rng is None:
                rng = make_rng(seed)
            chosen = rng.choice(outer, size=extra, replace=False)
        else:
            idx = np.floor((np.arange(extra) + 0.5) * outer.size / extra).astype(int)
            chosen = outer[idx]
        cols[chosen] = True
    return SamplingMask(
        width=width,
        sampled_columns=cols,
        acceleration=acceleration,
        center_fraction=center_fraction,
        seed=seed,
        pattern=pattern,
    )


def apply_mask(k_full, mask: SamplingMask, image_full=None) -> UndersampledSample:
    k_full = as_complex_image(k_full)
    if k_full.shape[-1] != mask.width:
        raise ShapeError(f"k-space width {k_full.shape[-1]} does not match mask width {mask.width}")
    k_sparse = np.where(mask.sampled_columns, k_full, 0)
    img = None if image_full is None else as_complex_image(image_full)
    return UndersampledSample(k_sparse=k_sparse, mask=mask, k_full=k_full, image_full=img)


def zero_fill_recon(sample: UndersampledSample) -> np.ndarray:
    """Per-coil inverse transform of the zero-filled measurements (the aliased baseline)."""
    return ifft2c(sample.k_sparse)
