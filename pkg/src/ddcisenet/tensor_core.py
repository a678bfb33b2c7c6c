"""Array conventions shared by every module.

Complex images are ``complex128`` arrays of shape ``(C, H, W)`` (coil-major,
row-major, H and W even). Real tensors are ``float64`` arrays, usually
``(channels, H, W)``. Both are plain numpy arrays; the helpers here only
validate and convert.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = [
    "as_complex_image",
    "as_real_tensor",
    "complex_to_channels",
    "channels_to_complex",
    "l2_norm",
    "make_rng",
    "derive_seed",
]


def as_complex_image(x, *, require_even: bool = True) -> np.ndarray:
    """Coerce ``x`` to a ``(C, H, W)`` complex128 array, adding a coil axis to 2D input."""
    arr = np.asarray(x)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"complex image must be 2D or 3D, got shape {arr.shape}")
    c, h, w = arr.shape
    if c < 1 or h < 1 or w < 1:
        raise ShapeError(f"empty complex image shape {arr.shape}")
    if require_even and (h % 2 or w % 2):
        raise ShapeError(f"height and width must be even, got {h}x{w}")
    return np.ascontiguousarray(arr, dtype=np.complex128)


def as_real_tensor(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ShapeError("real tensor contains non-finite values")
    return arr


def complex_to_channels(x) -> np.ndarray:
    """(C, H, W) complex -> (2C, H, W) real; channel 2c is Re(coil c), 2c+1 is Im(coil c)."""
    x = as_complex_image(x, require_even=False)
    c, h, w = x.shape
    out = np.empty((2 * c, h, w), dtype=np.float64)
    out[0::2] = x.real
    out[1::2] = x.imag
    return out


def channels_to_complex(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeError(f"expected (2C, H, W) tensor, got shape {t.shape}")
    if t.shape[0] % 2:
        raise ShapeError(f"channel count must be even, got {t.shape[0]}")
    return t[0::2] + 1j * t[1::2]


def l2_norm(x) -> float:
    """Square root of the sum of squared magnitudes (real or complex input)."""
    a = np.asarray(x)
    if np.iscomplexobj(a):
        sq = a.real * a.real + a.imag * a.imag
    else:
        sq = a.astype(np.float64) ** 2
    return float(np.sqrt(np.sum(sq)))


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; PCG64 output streams are identical across platforms."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for ``(seed, *keys)`` via numpy's SeedSequence hashing."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
