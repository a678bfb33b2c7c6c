"""The dual-domain cross-iteration cascade: forward graph, loss and reverse pass.

Iteration ``i`` runs an image-domain subnet then a k-space subnet::

    I_1 = H_I1(IFT(K_S))
    I_i = H_Ii(IFT(K_{i-1}) + I_{i-1})                      i >= 2
    K_i = D(H_Ki(D(FT(I_i) + K_{i-1}, K_S)), K_S)           (no K_0 term at i = 1)

where ``D`` is hard data consistency. With ``cir_enabled=False`` the
``+ I_{i-1}`` and ``+ K_{i-1}`` cross-iteration edges are dropped.

Parameters live in one flat dict keyed ``"<subnet>/<layer param>"`` with subnets
``inet1..inetN`` and ``knet1..knetN``; no weights are shared across iterations.

Complex gradients use the ``dL/dRe + i dL/dIm`` convention, under which the
adjoint of the unitary FT is the IFT and vice versa.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dc import data_consistency, data_consistency_backward
from .errors import ParameterError, ShapeError
from .fourier import fft2c, ifft2c
from .layers import SubnetConfig, Tape, init_params, param_shapes, subnet_backward, subnet_forward, zero_params
from .phantom import rss_combine
from .sampling import UndersampledSample
from .tensor_core import channels_to_complex, complex_to_channels

__all__ = [
    "CascadeConfig",
    "CascadeTrace",
    "LossReport",
    "subnet_names",
    "model_shapes",
    "init_model",
    "zero_model",
    "forward",
    "loss",
    "backward",
    "reconstruct",
]


@dataclass(frozen=True)
class CascadeConfig:
    iterations: int = 2
    cir_enabled: bool = True
    subnet: SubnetConfig = field(default_factory=lambda: SubnetConfig(in_channels=8))
    lambda_image: float = 0.5
    lambda_kspace: float = 0.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError(f"iterations must be >= 1, got {self.iterations}")
        if self.lambda_image < 0 or self.lambda_kspace < 0:
            raise ParameterError("loss weights must be non-negative")
        if self.subnet.in_channels % 2:
            raise ParameterError("subnet in_channels must be 2 x coils")

    @property
    def coils(self) -> int:
        return self.subnet.in_channels // 2

    @classmethod
    def for_coils(cls, coils: int, *, hidden: int = 32, kernel: int = 3, reduction: int = 8, blocks: int = 2, **kw):
        sub = SubnetConfig(
            in_channels=2 * coils, hidden_channels=hidden, kernel_size=kernel, se_reduction=reduction, blocks=blocks
        )
        return cls(subnet=sub, **kw)

    def canonical(self) -> str:
        """Sorted ``key=value`` lines; the basis of the checkpoint digest."""
        items = {
            "cascade.cir_enabled": str(self.cir_enabled).lower(),
            "cascade.iterations": str(self.iterations),
            "cascade.lambda_image": repr(float(self.lambda_image)),
            "cascade.lambda_kspace": repr(float(self.lambda_kspace)),
            "subnet.blocks": str(self.subnet.blocks),
            "subnet.hidden_channels": str(self.subnet.hidden_channels),
            "subnet.in_channels": str(self.subnet.in_channels),
            "subnet.kernel_size": str(self.subnet.kernel_size),
            "subnet.se_reduction": str(self.subnet.se_reduction),
        }
        return "".join(f"{k}={items[k]}\n" for k in sorted(items))

    @classmethod
    def from_canonical(cls, text: str) -> "CascadeConfig":
        kv = dict(line.split("=", 1) for line in text.splitlines() if line)
        try:
            sub = SubnetConfig(
                in_channels=int(kv["subnet.in_channels"]),
                hidden_channels=int(kv["subnet.hidden_channels"]),
                kernel_size=int(kv["subnet.kernel_size"]),
                se_reduction=int(kv["subnet.se_reduction"]),
                blocks=int(kv["subnet.blocks"]),
            )
            return cls(
                iterations=int(kv["cascade.iterations"]),
                cir_enabled=kv["cascade.cir_enabled"] == "true",
                subnet=sub,
                lambda_image=float(kv["cascade.lambda_image"]),
                lambda_kspace=float(kv["cascade.lambda_kspace"]),
            )
        except (KeyError, ValueError) as exc:
            raise ParameterError(f"incomplete cascade config: {exc}") from exc


def subnet_names(cfg: CascadeConfig) -> list[str]:
    n = cfg.iterations
    return [f"inet{i}" for i in range(1, n + 1)] + [f"knet{i}" for i in range(1, n + 1)]


def model_shapes(cfg: CascadeConfig) -> dict[str, tuple[int, ...]]:
    shapes = param_shapes(cfg.subnet)
    return {f"{net}/{k}": s for net in subnet_names(cfg) for k, s in shapes.items()}


def init_model(cfg: CascadeConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = {}
    for net in subnet_names(cfg):
        for k, v in init_params(cfg.subnet, rng).items():
            params[f"{net}/{k}"] = v
    return params


def zero_model(cfg: CascadeConfig) -> dict[str, np.ndarray]:
    return {f"{net}/{k}": v for net in subnet_names(cfg) for k, v in zero_params(cfg.subnet).items()}


def _check_params(params: dict, cfg: CascadeConfig) -> None:
    expected = model_shapes(cfg)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))[:3]
        extra = sorted(set(params) - set(expected))[:3]
        raise ParameterError(f"parameters do not match config (missing {missing}, unexpected {extra})")
    for k, shape in expected.items():
        if params[k].shape != shape:
            raise ParameterError(f"parameter {k} has shape {params[k].shape}, expected {shape}")


def _net(params: dict, name: str) -> dict:
    prefix = name + "/"
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def _apply_subnet(z: np.ndarray, params: dict, cfg: SubnetConfig, tape: Optional[Tape]) -> np.ndarray:
    return channels_to_complex(subnet_forward(complex_to_channels(z), params, cfg, tape))


@dataclass(eq=False)
class CascadeTrace:
    images: list  # I_1..I_N
    kspaces: list  # K_1..K_N
    r_out: np.ndarray  # RSS magnitude of IFT(K_N)
    tapes: Optional[dict] = None  # subnet name -> Tape
    consumed: bool = False


@dataclass
class LossReport:
    image_terms: list[float]
    kspace_terms: list[float]
    per_iteration: list[float]
    total: float


def forward(sample: UndersampledSample, params: dict, cfg: CascadeConfig, *, record: bool = True) -> CascadeTrace:
    _check_params(params, cfg)
    k_s = sample.k_sparse
    if k_s.shape[0] != cfg.coils:
        raise ShapeError(f"sample has {k_s.shape[0]} coils but the model expects {cfg.coils}")
    mask = sample.mask
    tapes = {name: Tape() for name in subnet_names(cfg)} if record else None
    images, kspaces = [], []
    for i in range(1, cfg.iterations + 1):
        if i == 1:
            x = ifft2c(k_s)
        else:
            x = ifft2c(kspaces[-1])
            if cfg.cir_enabled:
                x = x + images[-1]
        img = _apply_subnet(x, _net(params, f"inet{i}"), cfg.subnet, tapes and tapes[f"inet{i}"])
        a = fft2c(img)
        if i > 1 and cfg.cir_enabled:
            a = a + kspaces[-1]
        b = data_consistency(a, k_s, mask)
        c = _apply_subnet(b, _net(params, f"knet{i}"), cfg.subnet, tapes and tapes[f"knet{i}"])
        images.append(img)
        kspaces.append(data_consistency(c, k_s, mask))
    r_out = rss_combine(ifft2c(kspaces[-1]))
    return CascadeTrace(images=images, kspaces=kspaces, r_out=r_out, tapes=tapes)


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return float(np.mean(d.real**2 + d.imag**2))


def _targets(sample: UndersampledSample):
    if not sample.has_ground_truth:
        raise ParameterError("loss requires a sample with k_full and image_full")
    return ifft2c(sample.k_full), sample.k_full


def loss(trace: CascadeTrace, sample: UndersampledSample, cfg: CascadeConfig) -> LossReport:
    """Mean squared complex errors per iteration, weighted and summed."""
    img_t, k_t = _targets(sample)
    li = [_mse(img, img_t) for img in trace.images]
    lk = [_mse(k, k_t) for k in trace.kspaces]
    per = [cfg.lambda_image * a + cfg.lambda_kspace * b for a, b in zip(li, lk)]
    return LossReport(image_terms=li, kspace_terms=lk, per_iteration=per, total=float(sum(per)))


def backward(trace: CascadeTrace, sample: UndersampledSample, params: dict, cfg: CascadeConfig) -> dict[str, np.ndarray]:
    """Exact gradient of the total loss w.r.t. every parameter; consumes the trace's tapes."""
    if trace.tapes is None or trace.consumed:
        raise ParameterError("backward needs a fresh trace recorded with forward(record=True)")
    if len(trace.images) != cfg.iterations:
        raise ParameterError("trace length does not match config")
    trace.consumed = True
    img_t, k_t = _targets(sample)
    mask = sample.mask
    n = cfg.iterations
    size = img_t.size
    g_img = [cfg.lambda_image * 2.0 * (img - img_t) / size for img in trace.images]
    g_k = [cfg.lambda_kspace * 2.0 * (k - k_t) / size for k in trace.kspaces]
    grads = {}
    for i in range(n, 0, -1):
        j = i - 1
        # K_i = D(H_K(D(a)))
        gc = data_consistency_backward(g_k[j], mask)
        gch, kgrads = subnet_backward(complex_to_channels(gc), cfg.subnet, trace.tapes[f"knet{i}"])
        ga = data_consistency_backward(channels_to_complex(gch), mask)
        if i > 1 and cfg.cir_enabled:
            g_k[j - 1] = g_k[j - 1] + ga
        g_img[j] = g_img[j] + ifft2c(ga)
        # I_i = H_I(x)
        gxh, igrads = subnet_backward(complex_to_channels(g_img[j]), cfg.subnet, trace.tapes[f"inet{i}"])
        gx = channels_to_complex(gxh)
        if i > 1:
            g_k[j - 1] = g_k[j - 1] + fft2c(gx)
            if cfg.cir_enabled:
                g_img[j - 1] = g_img[j - 1] + gx
        grads.update({f"knet{i}/{k}": v for k, v in kgrads.items()})
        grads.update({f"inet{i}/{k}": v for k, v in igrads.items()})
    return {k: grads[k] for k in model_shapes(cfg)}


def reconstruct(sample: UndersampledSample, params: dict, cfg: CascadeConfig) -> np.ndarray:
    """RSS magnitude of the final k-space estimate, without recording tapes."""
    return forward(sample, params, cfg, record=False).r_out
