"""Dual-domain cascaded reconstruction of undersampled multi-coil MRI in pure numpy."""
from .cascade import CascadeConfig, forward, init_model, reconstruct
from .errors import DDError
from .fourier import fft2c, ifft2c
from .phantom import generate_dataset
from .sampling import SamplingMask, apply_mask, make_mask
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CascadeConfig",
    "DDError",
    "SamplingMask",
    "TrainConfig",
    "apply_mask",
    "fft2c",
    "forward",
    "generate_dataset",
    "ifft2c",
    "init_model",
    "make_mask",
    "reconstruct",
    "train",
]
