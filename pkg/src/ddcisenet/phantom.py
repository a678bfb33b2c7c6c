"""Synthetic ground truth: ellipse phantoms, smooth coil sensitivities, RSS combination."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .fourier import fft2c
from .tensor_core import as_complex_image, derive_seed, make_rng

__all__ = [
    "EllipseSpec",
    "SHEPP_LOGAN_TABLE",
    "default_head",
    "pixel_coordinates",
    "shepp_logan",
    "SensitivitySet",
    "make_sensitivities",
    "simulate_multicoil",
    "rss_combine",
    "GroundTruth",
    "generate_case",
    "generate_dataset",
]


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple[float, float]
    axes: tuple[float, float]
    angle: float  # radians, counter-clockwise
    intensity: float

    def __post_init__(self):
        if self.axes[0] <= 0 or self.axes[1] <= 0:
            raise ParameterError(f"ellipse semi-axes must be positive, got {self.axes}")


# (intensity, a, b, x0, y0, angle in degrees); the modified (Toft) Shepp-Logan head.
SHEPP_LOGAN_TABLE = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def default_head() -> list[EllipseSpec]:
    return [
        EllipseSpec(center=(x0, y0), axes=(a, b), angle=math.radians(deg), intensity=rho)
        for rho, a, b, x0, y0, deg in SHEPP_LOGAN_TABLE
    ]


def pixel_coordinates(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalised pixel centres; pixel (h/2, w/2) sits at the origin, y points up."""
    x = (np.arange(w) - w // 2) / (w / 2)
    y = (h // 2 - np.arange(h)) / (h / 2)
    return np.meshgrid(x, y)  # each (h, w)


def shepp_logan(h: int = 64, w: int = 64, ellipses: Optional[Sequence[EllipseSpec]] = None) -> np.ndarray:
    """Sum of ellipse intensities at each pixel, returned as a (1, H, W) complex image."""
    if h % 2 or w % 2:
        raise ShapeError(f"height and width must be even, got {h}x{w}")
    if ellipses is None:
        ellipses = default_head()
    xx, yy = pixel_coordinates(h, w)
    img = np.zeros((h, w))
    for e in ellipses:
        c, s = math.cos(e.angle), math.sin(e.angle)
        dx = xx - e.center[0]
        dy = yy - e.center[1]
        u = (dx * c + dy * s) / e.axes[0]
        v = (-dx * s + dy * c) / e.axes[1]
        img[u * u + v * v <= 1.0] += e.intensity
    return img[None].astype(np.complex128)


@dataclass(frozen=True, eq=False)
class SensitivitySet:
    maps: np.ndarray  # (C, H, W) complex

    @property
    def coils(self) -> int:
        return self.maps.shape[0]


def make_sensitivities(
    h: int, w: int, coils: int, rng: np.random.Generator, *, width: float = 1.2, radius: float = 1.5
) -> SensitivitySet:
    """Gaussian-bump coil profiles placed evenly around the field of view, RSS-normalised.

    Coil ``c`` sits at angle ``2*pi*c/C`` plus a random common offset, ``radius``
    away from the centre, with a random constant phase and a gentle random
    linear phase ramp.
    """
    if coils < 1:
        raise ParameterError(f"coil count must be >= 1, got {coils}")
    xx, yy = pixel_coordinates(h, w)
    offset = rng.uniform(0, 2 * np.pi)
    phases = rng.uniform(-np.pi, np.pi, size=coils)
    ramps = rng.uniform(-0.5, 0.5, size=(coils, 2))
    maps = np.empty((coils, h, w), dtype=np.complex128)
    for c in range(coils):
        theta = offset + 2 * np.pi * c / coils
        px, py = radius * np.cos(theta), radius * np.sin(theta)
        mag = np.exp(-((xx - px) ** 2 + (yy - py) ** 2) / (2 * width**2))
        phase = phases[c] + ramps[c, 0] * xx + ramps[c, 1] * yy
        maps[c] = mag * np.exp(1j * phase)
    maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return SensitivitySet(maps=maps)


def simulate_multicoil(img, sens: SensitivitySet) -> np.ndarray:
    img = as_complex_image(img)
    if img.shape[0] != 1:
        raise ShapeError(f"expected a single-coil image, got {img.shape[0]} coils")
    if img.shape[1:] != sens.maps.shape[1:]:
        raise ShapeError(f"image {img.shape[1:]} and sensitivities {sens.maps.shape[1:]} disagree")
    return sens.maps * img


def rss_combine(x) -> np.ndarray:
    """Root-sum-of-squares over the coil axis; returns a real (H, W) array."""
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[None]
    return np.sqrt(np.sum(x.real**2 + x.imag**2, axis=0))


# Hard-edged rasterisation leaves a flat k-space tail; a ~1 px point-spread
# restores the decaying spectrum of a band-limited acquisition.
PSF_SIGMA = 1.0


@dataclass(eq=False)
class GroundTruth:
    image_full: np.ndarray  # (C, H, W) coil images
    k_full: np.ndarray  # fft2c(image_full)
    sens: SensitivitySet
    phantom: Optional[np.ndarray] = None  # (1, H, W) underlying object; not stored on disk


def _perturb(ellipses: Sequence[EllipseSpec], jitter: float, rng: np.random.Generator) -> list[EllipseSpec]:
    """Relative +-jitter noise that keeps the head anatomically plausible.

    The first two ellipses (skull and brain) share one geometry scale per axis
    and one intensity factor, so the skull stays a ring around positive tissue.
    Every other ellipse gets independent relative noise on centre, axes and
    intensity, and all geometry is then scaled with the head.
    """
    head = 1.0 + jitter * rng.uniform(-1.0, 1.0, size=3)  # x scale, y scale, skull intensity
    out = []
    for i, e in enumerate(ellipses):
        if i < 2:
            f = np.array([1.0, 1.0, 1.0, 1.0, head[2]])
        else:
            f = 1.0 + jitter * rng.uniform(-1.0, 1.0, size=5)
        out.append(
            replace(
                e,
                center=(e.center[0] * f[0] * head[0], e.center[1] * f[1] * head[1]),
                axes=(e.axes[0] * f[2] * head[0], e.axes[1] * f[3] * head[1]),
                intensity=e.intensity * f[4],
            )
        )
    return out


def gaussian_psf(img, sigma: float) -> np.ndarray:
    """Blur each coil with a periodic Gaussian of ``sigma`` pixels, applied in k-space."""
    img = as_complex_image(img)
    if sigma <= 0:
        return img
    h, w = img.shape[1:]
    ky = np.fft.fftfreq(h)[:, None]
    kx = np.fft.fftfreq(w)[None, :]
    window = np.exp(-2 * (np.pi * sigma) ** 2 * (ky**2 + kx**2))
    return np.fft.ifft2(np.fft.fft2(img, axes=(-2, -1)) * window, axes=(-2, -1))


def generate_case(
    index: int, h: int, w: int, coils: int, jitter: float, seed: int, psf_sigma: float = PSF_SIGMA
) -> GroundTruth:
    """One ground-truth case; its randomness comes only from ``derive_seed(seed, index)``."""
    rng = make_rng(derive_seed(seed, index))
    ellipses = _perturb(default_head(), jitter, rng)
    # magnitude anatomy is non-negative; overlapping dark features may dip below zero
    phantom = np.maximum(shepp_logan(h, w, ellipses).real, 0.0)
    phantom = np.maximum(gaussian_psf(phantom, psf_sigma).real, 0.0).astype(np.complex128)
    sens = make_sensitivities(h, w, coils, rng)
    image_full = simulate_multicoil(phantom, sens)
    return GroundTruth(image_full=image_full, k_full=fft2c(image_full), sens=sens, phantom=phantom)


def generate_dataset(
    n: int,
    h: int = 64,
    w: int = 64,
    coils: int = 4,
    jitter: float = 0.15,
    seed: int = 0,
    psf_sigma: float = PSF_SIGMA,
) -> list[GroundTruth]:
    if n < 1:
        raise ParameterError(f"dataset size must be >= 1, got {n}")
    if not 0 <= jitter < 1:
        raise ParameterError(f"jitter must lie in [0, 1), got {jitter}")
    return [generate_case(i, h, w, coils, jitter, seed, psf_sigma) for i in range(n)]
