"""Reconstruction metrics: NMSE%, windowed SSIM, paired t-test and evaluation reports."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import cascade
from .errors import DegenerateTestError, ShapeError, UndefinedMetricError
from .fourier import ifft2c
from .phantom import rss_combine

__all__ = [
    "nmse_percent",
    "ssim",
    "student_t_sf",
    "paired_t_test",
    "PairedTest",
    "CaseMetrics",
    "MetricsReport",
    "case_metrics",
    "evaluate",
    "evaluate_zero_filling",
]


def nmse_percent(pred, truth) -> float:
    """``100 * ||pred - truth||^2 / ||truth||^2`` for real or complex arrays."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"shapes differ: {pred.shape} vs {truth.shape}")
    denom = float(np.sum(np.abs(truth) ** 2))
    if denom == 0.0:
        raise UndefinedMetricError("NMSE is undefined for an all-zero reference")
    return 100.0 * float(np.sum(np.abs(pred - truth) ** 2)) / denom


def ssim(pred, truth, *, window: int = 7, k1: float = 0.01, k2: float = 0.03, data_range: Optional[float] = None) -> float:
    """Mean SSIM over every fully contained ``window x window`` uniform window.

    Local statistics are population (biased) means. The dynamic range defaults
    to ``max(truth) - min(truth)``, falling back to 1 for a constant reference.
    """
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ShapeError(f"SSIM needs two 2D images of equal shape, got {x.shape} and {y.shape}")
    if x.shape[0] < window or x.shape[1] < window:
        raise ShapeError(f"image {x.shape} is smaller than the {window}x{window} window")
    if data_range is None:
        data_range = float(y.max() - y.min()) or 1.0
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    wx = sliding_window_view(x, (window, window))
    wy = sliding_window_view(y, (window, window))
    mx = wx.mean(axis=(-2, -1))
    my = wy.mean(axis=(-2, -1))
    dx = wx - mx[..., None, None]
    dy = wy - my[..., None, None]
    vx = (dx * dx).mean(axis=(-2, -1))
    vy = (dy * dy).mean(axis=(-2, -1))
    cxy = (dx * dy).mean(axis=(-2, -1))
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


# -- Student t distribution -------------------------------------------------------


def _betacf(a: float, b: float, x: float, *, eps: float = 1e-16, max_iter: int = 500) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, dof: float) -> float:
    """Two-tailed tail mass ``P(|T| >= |t|)`` for Student's t with ``dof`` degrees of freedom."""
    return regularized_beta(dof / 2.0, 0.5, dof / (dof + t * t))


@dataclass(frozen=True)
class PairedTest:
    t: float
    p: float
    n: int


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> PairedTest:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"paired samples must be equal-length 1D, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise DegenerateTestError(f"paired t-test needs at least 2 pairs, got {n}")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise DegenerateTestError("paired differences have zero variance")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    return PairedTest(t=t, p=student_t_sf(t, n - 1), n=n)


# -- evaluation ---------------------------------------------------------------------


@dataclass
class CaseMetrics:
    case: int
    ksp_nmse: float
    ksp_ssim: float
    img_nmse: float
    img_ssim: float


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


@dataclass
class MetricsReport:
    cases: list = field(default_factory=list)
    label: str = ""
    test: Optional[PairedTest] = None

    def column(self, name: str) -> list[float]:
        return [getattr(c, name) for c in self.cases]

    def summary(self) -> dict[str, tuple[float, float]]:
        """Mean and sample standard deviation of each metric over cases."""
        return {k: _mean_std(self.column(k)) for k in ("ksp_nmse", "ksp_ssim", "img_nmse", "img_ssim")}

    def records(self) -> list[str]:
        lines = []
        for c in self.cases:
            lines.append(f"case={c.case} domain=img nmse={c.img_nmse:.10g} ssim={c.img_ssim:.10g}")
            lines.append(f"case={c.case} domain=ksp nmse={c.ksp_nmse:.10g} ssim={c.ksp_ssim:.10g}")
        return lines

    def table(self) -> str:
        s = self.summary()
        head = f"{'label':<16} | {'k-space NMSE%':>20} {'k-space SSIM':>18} | {'image NMSE%':>20} {'image SSIM':>18}"
        fmt = lambda ms, p: f"{ms[0]:.{p}f} ± {ms[1]:.{p}f}"
        row = (
            f"{self.label or '-':<16} | {fmt(s['ksp_nmse'], 2):>20} {fmt(s['ksp_ssim'], 3):>18} "
            f"| {fmt(s['img_nmse'], 2):>20} {fmt(s['img_ssim'], 3):>18}"
        )
        return head + "\n" + "-" * len(head) + "\n" + row


def case_metrics(k_pred, sample, case: int = 0) -> CaseMetrics:
    """Metrics of a predicted multi-coil k-space against the sample's ground truth."""
    try:
        k_mag = np.abs(k_pred).reshape(-1, k_pred.shape[-1])
        k_ref = np.abs(sample.k_full).reshape(-1, k_pred.shape[-1])
        img = rss_combine(ifft2c(k_pred))
        ref = rss_combine(sample.image_full)
        return CaseMetrics(
            case=case,
            ksp_nmse=nmse_percent(k_mag, k_ref),
            ksp_ssim=ssim(k_mag, k_ref),
            img_nmse=nmse_percent(img, ref),
            img_ssim=ssim(img, ref),
        )
    except (UndefinedMetricError, ShapeError) as exc:
        raise type(exc)(f"case {case}: {exc}") from exc


def _case_id(sample, idx: int) -> int:
    return sample.meta.get("case", idx)


def evaluate(samples, params: dict, ccfg, label: str = "") -> MetricsReport:
    report = MetricsReport(label=label)
    for idx, s in enumerate(samples):
        trace = cascade.forward(s, params, ccfg, record=False)
        report.cases.append(case_metrics(trace.kspaces[-1], s, _case_id(s, idx)))
    return report


def evaluate_zero_filling(samples, label: str = "zero-filling") -> MetricsReport:
    report = MetricsReport(label=label)
    for idx, s in enumerate(samples):
        report.cases.append(case_metrics(s.k_sparse, s, _case_id(s, idx)))
    return report
