"""Centered orthonormal 2D DFT over the last two axes.

The DC bin sits at ``(H/2, W/2)``. Both directions are scaled by ``1/sqrt(HW)``,
so the pair is unitary and each is the adjoint of the other.
"""
import numpy as np

from .tensor_core import as_complex_image

__all__ = ["fft2c", "ifft2c"]

_AXES = (-2, -1)


def fft2c(x) -> np.ndarray:
    x = as_complex_image(x)
    tmp = np.fft.ifftshift(x, axes=_AXES)
    tmp = np.fft.fft2(tmp, axes=_AXES, norm="ortho")
    return np.fft.fftshift(tmp, axes=_AXES)


def ifft2c(k) -> np.ndarray:
    k = as_complex_image(k)
    tmp = np.fft.ifftshift(k, axes=_AXES)
    tmp = np.fft.ifft2(tmp, axes=_AXES, norm="ortho")
    return np.fft.fftshift(tmp, axes=_AXES)
