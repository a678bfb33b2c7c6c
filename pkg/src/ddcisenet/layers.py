"""Hand-differentiated layers and the squeeze-excitation residual subnetwork.

Every ``*_forward`` takes an optional :class:`Tape`; when given, it pushes one
node holding whatever the matching ``*_backward`` needs. Backward calls pop
nodes, so they must run in exact reverse order of the forwards.

Activations are ``float64`` arrays of shape ``(channels, H, W)``; convolutions
are stride 1 with zero "same" padding.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError, ShapeError, TapeError

__all__ = [
    "Tape",
    "SubnetConfig",
    "conv2d_forward",
    "conv2d_backward",
    "relu_forward",
    "relu_backward",
    "global_avg_pool_forward",
    "global_avg_pool_backward",
    "fc_forward",
    "fc_backward",
    "sigmoid_forward",
    "sigmoid_backward",
    "se_block_forward",
    "se_block_backward",
    "subnet_forward",
    "subnet_backward",
    "param_shapes",
    "init_params",
    "zero_params",
]


class Tape:
    """Stack of forward records consumed in reverse by the backward functions."""

    def __init__(self):
        self.nodes: list[tuple[str, tuple]] = []

    def push(self, kind: str, *cache) -> None:
        self.nodes.append((kind, cache))

    def pop(self, kind: str) -> tuple:
        if not self.nodes:
            raise TapeError(f"backward of {kind!r} called on an empty tape")
        top, cache = self.nodes[-1]
        if top != kind:
            raise TapeError(f"backward of {kind!r} called but the tape top is {top!r}")
        self.nodes.pop()
        return cache

    def __len__(self):
        return len(self.nodes)


def _record(tape: Optional[Tape], kind: str, *cache) -> None:
    if tape is not None:
        tape.push(kind, *cache)


# -- convolution -------------------------------------------------------------


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p)))
    return sliding_window_view(xp, (k, k), axis=(1, 2))  # (ch, H, W, k, k)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, tape: Optional[Tape] = None) -> np.ndarray:
    """Cross-correlation of ``x`` (Cin, H, W) with ``w`` (Cout, Cin, k, k) plus bias."""
    if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
        raise ShapeError(f"kernel must be (Cout, Cin, k, k) with odd k, got {w.shape}")
    if x.ndim != 3 or x.shape[0] != w.shape[1]:
        raise ShapeError(f"input channels {x.shape} do not match kernel {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias shape {b.shape} does not match {w.shape[0]} output channels")
    cols = _windows(x, w.shape[2])
    out = np.tensordot(w, cols, axes=([1, 2, 3], [0, 3, 4]))
    out += b[:, None, None]
    _record(tape, "conv2d", cols, w)
    return out


def conv2d_backward(grad_out: np.ndarray, tape: Tape):
    """Returns ``(grad_x, grad_w, grad_b)``."""
    cols, w = tape.pop("conv2d")
    k = w.shape[2]
    grad_b = grad_out.sum(axis=(1, 2))
    grad_w = np.tensordot(grad_out, cols, axes=([1, 2], [1, 2]))
    # adjoint of a same-padded correlation: correlate with the flipped kernel
    gcols = _windows(grad_out, k)
    grad_x = np.tensordot(w[:, :, ::-1, ::-1], gcols, axes=([0, 2, 3], [0, 3, 4]))
    return grad_x, grad_w, grad_b


# -- pointwise and small layers ---------------------------------------------


def relu_forward(x: np.ndarray, tape: Optional[Tape] = None) -> np.ndarray:
    _record(tape, "relu", x > 0)
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, tape: Tape) -> np.ndarray:
    (active,) = tape.pop("relu")
    return np.where(active, grad_out, 0.0)


def global_avg_pool_forward(x: np.ndarray, tape: Optional[Tape] = None) -> np.ndarray:
    _record(tape, "gap", x.shape)
    return x.mean(axis=(1, 2))


def global_avg_pool_backward(grad_out: np.ndarray, tape: Tape) -> np.ndarray:
    (shape,) = tape.pop("gap")
    n = shape[1] * shape[2]
    return np.broadcast_to((grad_out / n)[:, None, None], shape).copy()


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, tape: Optional[Tape] = None) -> np.ndarray:
    if w.ndim != 2 or w.shape[1] != x.shape[0] or b.shape != (w.shape[0],):
        raise ShapeError(f"fully connected shapes disagree: x {x.shape}, w {w.shape}, b {b.shape}")
    _record(tape, "fc", x, w)
    return w @ x + b


def fc_backward(grad_out: np.ndarray, tape: Tape):
    x, w = tape.pop("fc")
    return w.T @ grad_out, np.outer(grad_out, x), grad_out.copy()


def sigmoid_forward(x: np.ndarray, tape: Optional[Tape] = None) -> np.ndarray:
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    _record(tape, "sigmoid", y)
    return y


def sigmoid_backward(grad_out: np.ndarray, tape: Tape) -> np.ndarray:
    (y,) = tape.pop("sigmoid")
    return grad_out * y * (1.0 - y)


# -- squeeze-and-excitation ---------------------------------------------------


def se_block_forward(x: np.ndarray, params: dict, tape: Optional[Tape] = None) -> np.ndarray:
    """Rescale each channel of ``x`` by a sigmoid gate computed from its global mean.

    ``params`` holds ``fc1.w`` (ch/r, ch), ``fc1.b``, ``fc2.w`` (ch, ch/r), ``fc2.b``.
    """
    ch = x.shape[0]
    hidden = params["fc1.w"].shape[0]
    if params["fc1.w"].shape != (hidden, ch) or params["fc2.w"].shape != (ch, hidden):
        raise ShapeError(
            f"SE weights {params['fc1.w'].shape}/{params['fc2.w'].shape} do not fit {ch} channels"
        )
    if hidden == 0 or ch % hidden:
        raise ParameterError(f"{ch} channels not divisible into an SE bottleneck of {hidden}")
    s = global_avg_pool_forward(x, tape)
    z = fc_forward(s, params["fc1.w"], params["fc1.b"], tape)
    z = relu_forward(z, tape)
    z = fc_forward(z, params["fc2.w"], params["fc2.b"], tape)
    g = sigmoid_forward(z, tape)
    _record(tape, "se_scale", x, g)
    return x * g[:, None, None]


def se_block_backward(grad_out: np.ndarray, tape: Tape):
    """Returns ``(grad_x, grads)`` with ``grads`` keyed like the forward params."""
    x, g = tape.pop("se_scale")
    grad_x = grad_out * g[:, None, None]
    grad_g = np.einsum("chw,chw->c", grad_out, x)
    gz = sigmoid_backward(grad_g, tape)
    gz, gw2, gb2 = fc_backward(gz, tape)
    gz = relu_backward(gz, tape)
    gs, gw1, gb1 = fc_backward(gz, tape)
    grad_x = grad_x + global_avg_pool_backward(gs, tape)
    grads = {"fc1.w": gw1, "fc1.b": gb1, "fc2.w": gw2, "fc2.b": gb2}
    return grad_x, grads


# -- subnetwork ----------------------------------------------------------------


@dataclass(frozen=True)
class SubnetConfig:
    in_channels: int = 2
    hidden_channels: int = 32
    kernel_size: int = 3
    se_reduction: int = 8
    blocks: int = 2

    def __post_init__(self):
        if self.in_channels < 1 or self.hidden_channels < 1 or self.blocks < 0:
            raise ParameterError(f"invalid subnet sizes: {self}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ParameterError(f"kernel size must be odd, got {self.kernel_size}")
        if self.se_reduction < 1 or self.hidden_channels % self.se_reduction:
            raise ParameterError(
                f"hidden_channels {self.hidden_channels} not divisible by se_reduction {self.se_reduction}"
            )


def param_shapes(cfg: SubnetConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in canonical (initialisation and file) order."""
    c, h, k = cfg.in_channels, cfg.hidden_channels, cfg.kernel_size
    r = h // cfg.se_reduction
    shapes = {"lift.w": (h, c, k, k), "lift.b": (h,)}
    for j in range(cfg.blocks):
        p = f"block{j}."
        shapes[p + "conv1.w"] = (h, h, k, k)
        shapes[p + "conv1.b"] = (h,)
        shapes[p + "conv2.w"] = (h, h, k, k)
        shapes[p + "conv2.b"] = (h,)
        shapes[p + "se.fc1.w"] = (r, h)
        shapes[p + "se.fc1.b"] = (r,)
        shapes[p + "se.fc2.w"] = (h, r)
        shapes[p + "se.fc2.b"] = (h,)
    shapes["proj.w"] = (c, h, k, k)
    shapes["proj.b"] = (c,)
    return shapes


def init_params(cfg: SubnetConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """He-uniform (fan-in) weights and zero biases, except a zero output projection.

    With ``proj.w = 0`` the global residual makes a fresh subnet the identity,
    so an untrained cascade starts exactly at zero-filling. A random projection
    adds an image-sized perturbation that training spends most of its budget
    undoing.
    """
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b") or name == "proj.w":
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zero_params(cfg: SubnetConfig) -> dict[str, np.ndarray]:
    return {name: np.zeros(shape) for name, shape in param_shapes(cfg).items()}


def _sub(params: dict, prefix: str) -> dict:
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def subnet_forward(x: np.ndarray, params: dict, cfg: SubnetConfig, tape: Optional[Tape] = None) -> np.ndarray:
    """lift conv -> ``blocks`` x (conv, relu, conv, SE, + block input) -> project conv -> + x."""
    if x.ndim != 3 or x.shape[0] != cfg.in_channels:
        raise ShapeError(f"subnet expects {cfg.in_channels} input channels, got shape {x.shape}")
    h = conv2d_forward(x, params["lift.w"], params["lift.b"], tape)
    for j in range(cfg.blocks):
        p = f"block{j}."
        t = conv2d_forward(h, params[p + "conv1.w"], params[p + "conv1.b"], tape)
        t = relu_forward(t, tape)
        t = conv2d_forward(t, params[p + "conv2.w"], params[p + "conv2.b"], tape)
        t = se_block_forward(t, _sub(params, p + "se."), tape)
        h = h + t
    return conv2d_forward(h, params["proj.w"], params["proj.b"], tape) + x


def subnet_backward(grad_out: np.ndarray, cfg: SubnetConfig, tape: Tape):
    """Returns ``(grad_x, grads)`` for the most recent :func:`subnet_forward` on ``tape``."""
    grads = {}
    grad_x = grad_out.copy()
    gh, grads["proj.w"], grads["proj.b"] = conv2d_backward(grad_out, tape)
    for j in reversed(range(cfg.blocks)):
        p = f"block{j}."
        gt, se_grads = se_block_backward(gh, tape)
        for k, v in se_grads.items():
            grads[p + "se." + k] = v
        gt, grads[p + "conv2.w"], grads[p + "conv2.b"] = conv2d_backward(gt, tape)
        gt = relu_backward(gt, tape)
        gt, grads[p + "conv1.w"], grads[p + "conv1.b"] = conv2d_backward(gt, tape)
        gh = gh + gt
    gx, grads["lift.w"], grads["lift.b"] = conv2d_backward(gh, tape)
    grad_x += gx
    return grad_x, {k: grads[k] for k in param_shapes(cfg)}
