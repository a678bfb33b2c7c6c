"""Hard data consistency: measured k-space columns overwrite the prediction."""
import numpy as np

from .errors import ShapeError
from .sampling import SamplingMask

__all__ = ["data_consistency", "data_consistency_backward"]


def data_consistency(k_pred, k_s, mask: SamplingMask) -> np.ndarray:
    k_pred = np.asarray(k_pred)
    k_s = np.asarray(k_s)
    if k_pred.shape != k_s.shape:
        raise ShapeError(f"prediction shape {k_pred.shape} != measurement shape {k_s.shape}")
    if k_pred.shape[-1] != mask.width:
        raise ShapeError(f"k-space width {k_pred.shape[-1]} != mask width {mask.width}")
    return np.where(mask.sampled_columns, k_s, k_pred)


def data_consistency_backward(grad_out, mask: SamplingMask) -> np.ndarray:
    """Gradient w.r.t. the prediction: sampled columns carry none."""
    grad_out = np.asarray(grad_out)
    return np.where(mask.sampled_columns, 0, grad_out).astype(grad_out.dtype, copy=False)
