"""Adam, the per-case training loop, validation and checkpoint hooks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import cascade
from .cascade import CascadeConfig
from .errors import NonFiniteLossError, ParameterError, ShapeError
from .sampling import UndersampledSample, apply_mask, make_mask
from .tensor_core import derive_seed, make_rng

__all__ = [
    "OptimState",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "prepare_samples",
    "train",
    "validation_loss",
]


@dataclass
class OptimState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict, **hyper) -> "OptimState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **hyper,
        )


def adam_step(params: dict, grads: dict, state: OptimState):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if set(grads) != set(params):
        raise ShapeError("gradient names do not match parameter names")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ShapeError(f"shape mismatch for {k}: param {p.shape}, grad {g.shape}")
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class TrainConfig:
    epochs: int = 1
    batch_size: int = 1
    seed: int = 0
    lr: float = 1e-3
    max_steps: Optional[int] = None  # stop early after this many optimizer steps
    val_every: int = 0  # steps; 0 disables validation
    checkpoint_path: Optional[str] = None
    checkpoint_every: int = 0  # steps; the final state is always written when a path is set
    log_every: int = 10  # steps; 0 silences progress lines
    resample_masks: bool = True  # draw a fresh mask per (epoch, case) with each sample's mask parameters
    augment: bool = False  # random point flips and global phase per (epoch, case); needs ground truth

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch size must be >= 1, got {self.batch_size}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ParameterError(f"max_steps must be >= 1, got {self.max_steps}")


@dataclass
class TrainResult:
    params: dict
    state: OptimState
    history: list = field(default_factory=list)  # total loss per optimizer step
    val_history: list = field(default_factory=list)  # (step, mean validation loss)


def prepare_samples(
    ground_truths: Sequence,
    acceleration=4,
    center_fraction: float = 0.08,
    pattern: str = "random_lines",
    seed: int = 0,
    start: int = 0,
) -> list[UndersampledSample]:
    """Undersample each case with its own mask seeded by ``(seed, 3, case index)``.

    Case indices count from ``start`` so a slice of a dataset gets the same
    masks it would get inside the full dataset.
    """
    samples = []
    for idx, gt in enumerate(ground_truths, start=start):
        mseed = derive_seed(seed, 3, idx)
        mask = make_mask(gt.k_full.shape[-1], acceleration, center_fraction, pattern, make_rng(mseed), seed=mseed)
        s = apply_mask(gt.k_full, mask, gt.image_full)
        s.meta["case"] = idx
        samples.append(s)
    return samples


def validation_loss(samples: Sequence[UndersampledSample], params: dict, ccfg: CascadeConfig) -> float:
    total = 0.0
    for s in samples:
        total += cascade.loss(cascade.forward(s, params, ccfg, record=False), s, ccfg).total
    return total / len(samples)


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return make_rng(derive_seed(seed, 1, epoch)).permutation(n)


def point_flip(x: np.ndarray, axis: int) -> np.ndarray:
    """Reflect about the centre index n//2 (coordinate -> -coordinate), commuting with fft2c."""
    n = x.shape[axis]
    return np.take(x, (-np.arange(n)) % n, axis=axis)


def _variant(s: UndersampledSample, seed: int, epoch: int, idx: int, *, remask: bool, augment: bool):
    rng = make_rng(derive_seed(seed, 2, epoch, idx))
    k_full, image = s.k_full, s.image_full
    if augment:
        if not s.has_ground_truth:
            raise ParameterError(f"augmentation needs ground truth (case {idx})")
        flips = rng.random(2) < 0.5
        phase = np.exp(2j * np.pi * rng.random())
        for axis, flip in zip((-2, -1), flips):
            if flip:
                k_full, image = point_flip(k_full, axis), point_flip(image, axis)
        k_full, image = k_full * phase, image * phase
    m = s.mask
    if remask:
        mseed = int(rng.integers(2**63))
        m = make_mask(m.width, m.acceleration, m.center_fraction, m.pattern, make_rng(mseed), seed=mseed)
    out = apply_mask(k_full, m, image)
    out.meta = dict(s.meta)
    return out


def train(
    dataset: Sequence[UndersampledSample],
    cfg: TrainConfig,
    ccfg: CascadeConfig,
    *,
    val_samples: Sequence[UndersampledSample] = (),
    params: Optional[dict] = None,
    state: Optional[OptimState] = None,
    log: Callable[[str], None] = print,
) -> TrainResult:
    """Minimise the summed dual-domain loss with Adam, one batch per step.

    Cases are visited in a seeded permutation per epoch. Passing ``params`` and
    ``state`` from a checkpoint resumes at ``state.step`` on the same trajectory
    an uninterrupted run would have followed.
    """
    from .storage import save_checkpoint

    if not dataset:
        raise ParameterError("training dataset is empty")
    for s in dataset:
        if not s.has_ground_truth:
            raise ParameterError("every training sample needs ground truth")
    if params is None:
        params = cascade.init_model(ccfg, make_rng(derive_seed(cfg.seed, 0)))
    if state is None:
        state = OptimState.for_params(params, lr=cfg.lr)

    n = len(dataset)
    per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * per_epoch
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)
    result = TrainResult(params=params, state=state)

    while state.step < total_steps:
        step = state.step
        epoch, pos = divmod(step, per_epoch)
        order = _epoch_order(cfg.seed, epoch, n)
        batch = order[pos * cfg.batch_size : (pos + 1) * cfg.batch_size]
        grads = None
        batch_loss = 0.0
        for idx in batch:
            s = dataset[idx]
            if cfg.resample_masks or cfg.augment:
                s = _variant(s, cfg.seed, epoch, int(idx), remask=cfg.resample_masks, augment=cfg.augment)
            trace = cascade.forward(s, params, ccfg)
            value = cascade.loss(trace, s, ccfg).total
            if not math.isfinite(value):
                raise NonFiniteLossError(f"non-finite loss {value} at step {step + 1}, case {idx}")
            g = cascade.backward(trace, s, params, ccfg)
            if grads is None:
                grads = g
            else:
                for k in grads:
                    grads[k] += g[k]
            batch_loss += value
        if len(batch) > 1:
            for k in grads:
                grads[k] /= len(batch)
        batch_loss /= len(batch)
        adam_step(params, grads, state)
        result.history.append(batch_loss)

        done = state.step
        if cfg.log_every and (done % cfg.log_every == 0 or done == total_steps):
            log(f"step={done} loss={batch_loss:.6e}")
        if val_samples and cfg.val_every and done % cfg.val_every == 0:
            vl = validation_loss(val_samples, params, ccfg)
            result.val_history.append((done, vl))
            log(f"step={done} val_loss={vl:.6e}")
        if cfg.checkpoint_path and cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
            save_checkpoint(params, state, cfg.checkpoint_path, ccfg)

    if cfg.checkpoint_path:
        save_checkpoint(params, state, cfg.checkpoint_path, ccfg)
    return result
