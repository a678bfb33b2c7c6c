"""Desk-scale experiments: the learning-trend run and the CIR on/off ablation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .cascade import CascadeConfig
from .phantom import generate_dataset
from .training import TrainConfig, prepare_samples, train


@dataclass(frozen=True)
class DeskConfig:
    size: int = 64
    coils: int = 4
    n_train: int = 24
    n_val: int = 8
    jitter: float = 0.15
    acceleration: float = 4.0
    center_fraction: float = 0.08
    iterations: int = 2
    steps: int = 200
    lr: float = 1e-3


@dataclass
class TrendResult:
    seed: int
    cir: bool
    zf_nmse: float  # mean val image NMSE% of zero-filling
    model_nmse: float  # mean val image NMSE% of the trained cascade
    first_loss: float
    final_loss: float  # running mean over the last epoch worth of steps
    seconds: float
    per_case: list = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return self.model_nmse / self.zf_nmse


def desk_samples(seed: int, cfg: DeskConfig = DeskConfig()):
    gts = generate_dataset(cfg.n_train + cfg.n_val, cfg.size, cfg.size, cfg.coils, cfg.jitter, seed=seed)
    samples = prepare_samples(gts, cfg.acceleration, cfg.center_fraction, seed=seed)
    return samples[: cfg.n_train], samples[cfg.n_train :]


def desk_trend(seed: int = 17, cir: bool = True, cfg: DeskConfig = DeskConfig(), log=None) -> TrendResult:
    train_set, val_set = desk_samples(seed, cfg)
    ccfg = CascadeConfig.for_coils(cfg.coils, iterations=cfg.iterations, cir_enabled=cir)
    tcfg = TrainConfig(epochs=10**6, max_steps=cfg.steps, seed=seed, lr=cfg.lr, log_every=0)
    t0 = time.perf_counter()
    res = train(train_set, tcfg, ccfg, log=log or (lambda _msg: None))
    seconds = time.perf_counter() - t0
    model = metrics.evaluate(val_set, res.params, ccfg)
    zf = metrics.evaluate_zero_filling(val_set)
    tail = res.history[-min(len(res.history), cfg.n_train) :]
    return TrendResult(
        seed=seed,
        cir=cir,
        zf_nmse=float(np.mean(zf.column("img_nmse"))),
        model_nmse=float(np.mean(model.column("img_nmse"))),
        first_loss=res.history[0],
        final_loss=float(np.mean(tail)),
        seconds=seconds,
        per_case=model.column("img_nmse"),
    )


@dataclass
class AblationResult:
    on: list
    off: list
    test: metrics.PairedTest

    def summary(self) -> str:
        mean = lambda rs: float(np.mean([r.model_nmse for r in rs]))
        lines = [f"{'seed':>5} {'zf NMSE%':>10} {'CIR on':>10} {'CIR off':>10}"]
        for a, b in zip(self.on, self.off):
            lines.append(f"{a.seed:>5} {a.zf_nmse:>10.3f} {a.model_nmse:>10.3f} {b.model_nmse:>10.3f}")
        lines.append(f"mean CIR on={mean(self.on):.3f} off={mean(self.off):.3f}")
        lines.append(f"paired t={self.test.t:.4f} p={self.test.p:.4f} n={self.test.n}")
        order = "on <= off" if mean(self.on) <= mean(self.off) else "on > off"
        lines.append(f"ordering: {order}")
        return "\n".join(lines)


def cir_ablation(seeds=(17, 18, 19, 20, 21), cfg: DeskConfig = DeskConfig(), cache=None, log=None) -> AblationResult:
    """Run the trend experiment per seed with CIR on and off. ``cache`` maps (seed, cir) to earlier results."""
    cache = {} if cache is None else cache
    for seed in seeds:
        for cir in (True, False):
            if (seed, cir) not in cache:
                cache[(seed, cir)] = desk_trend(seed, cir, cfg)
                if log:
                    r = cache[(seed, cir)]
                    log(f"seed={seed} cir={'on' if cir else 'off'} nmse={r.model_nmse:.3f} zf={r.zf_nmse:.3f}")
    on = [cache[(s, True)] for s in seeds]
    off = [cache[(s, False)] for s in seeds]
    test = metrics.paired_t_test([r.model_nmse for r in on], [r.model_nmse for r in off])
    return AblationResult(on=on, off=off, test=test)
