import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddcisenet.cascade import CascadeConfig, zero_model
from ddcisenet.errors import DegenerateTestError, ShapeError, UndefinedMetricError
from ddcisenet.metrics import (
    MetricsReport,
    evaluate,
    evaluate_zero_filling,
    nmse_percent,
    paired_t_test,
    regularized_beta,
    ssim,
    student_t_sf,
)
from ddcisenet.phantom import generate_dataset
from ddcisenet.sampling import UndersampledSample
from ddcisenet.tensor_core import make_rng
from ddcisenet.training import prepare_samples

# scipy.stats.ttest_rel(d, zeros) for d = [1.1, 0.9, 1.3, 0.7, 1.0]
REF_T = 9.999999999999998
REF_P = 0.0005620036227159916
# scipy.stats.ttest_1samp([0.3, -0.1, 0.5, 0.2, 0.9, -0.4, 0.1], 0)
REF_T2 = 1.3561847430275524
REF_P2 = 0.223852528672143
# 2 * scipy.stats.t.sf(t, dof)
REF_SF = [(2.5, 3, 0.08770664700806555), (0.7, 30, 0.48932044349967163), (12.0, 1, 0.05292935211917974)]


def naive_ssim(x, y, window=7, k1=0.01, k2=0.03, data_range=None):
    if data_range is None:
        data_range = float(y.max() - y.min()) or 1.0
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    h, w = x.shape
    n = window * window
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            a = [x[i + di, j + dj] for di in range(window) for dj in range(window)]
            b = [y[i + di, j + dj] for di in range(window) for dj in range(window)]
            ma, mb = sum(a) / n, sum(b) / n
            va = sum((p - ma) ** 2 for p in a) / n
            vb = sum((q - mb) ** 2 for q in b) / n
            cov = sum((p - ma) * (q - mb) for p, q in zip(a, b)) / n
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


def test_nmse_examples():
    t = np.array([3.0, 4.0])
    assert nmse_percent(t, t) == 0.0
    assert nmse_percent(np.zeros(2), t) == 100.0
    assert nmse_percent(np.array([3.0, 0.0]), t) == pytest.approx(64.0)
    with pytest.raises(UndefinedMetricError):
        nmse_percent(t, np.zeros(2))
    with pytest.raises(ShapeError):
        nmse_percent(t, np.zeros(3))


def test_nmse_scale_invariance_random():
    rng = make_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 50))
        p, t = rng.standard_normal((2, n)) + 1j * rng.standard_normal((2, n))
        alpha = rng.uniform(-1e3, 1e3) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        assert nmse_percent(alpha * p, alpha * t) == pytest.approx(nmse_percent(p, t), rel=1e-10)


def test_ssim_identity():
    rng = make_rng(1)
    x = rng.standard_normal((12, 9))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-15)
    const = np.full((8, 8), 3.0)
    assert ssim(const, const) == pytest.approx(1.0)


def test_ssim_constant_images_luminance_only():
    a, b = np.full((8, 8), 0.5), np.full((8, 8), 1.0)
    c1 = 0.01**2
    expected = (2 * 0.5 * 1.0 + c1) / (0.5**2 + 1.0**2 + c1)
    assert ssim(a, b, data_range=1.0) == pytest.approx(expected, rel=1e-14)


def test_ssim_matches_naive_oracle():
    rng = make_rng(2)
    for _ in range(20):
        x = rng.uniform(0, 1, (16, 16))
        y = x + 0.3 * rng.standard_normal((16, 16))
        assert abs(ssim(x, y) - naive_ssim(x, y)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_ssim_symmetric_and_bounded(seed):
    rng = make_rng(seed)
    a, b = rng.standard_normal((2, 9, 11))
    s = ssim(a, b, data_range=2.0)
    assert s == pytest.approx(ssim(b, a, data_range=2.0), abs=1e-14)
    assert -1.0 <= s <= 1.0


def test_ssim_errors():
    with pytest.raises(ShapeError):
        ssim(np.zeros((6, 10)), np.zeros((6, 10)))
    with pytest.raises(ShapeError):
        ssim(np.zeros((8, 8)), np.zeros((8, 9)))


def test_t_distribution_against_reference():
    for t, dof, p in REF_SF:
        assert abs(student_t_sf(t, dof) - p) < 1e-10
    assert regularized_beta(2.0, 3.0, 0.0) == 0.0 and regularized_beta(2.0, 3.0, 1.0) == 1.0
    # I_x(1, 1) = x
    assert regularized_beta(1.0, 1.0, 0.37) == pytest.approx(0.37, abs=1e-14)


def test_paired_t_test_reference():
    d = np.array([1.1, 0.9, 1.3, 0.7, 1.0])
    res = paired_t_test(d + 2.0, np.full(5, 2.0))
    assert abs(res.t - REF_T) < 1e-8
    assert abs(res.p - REF_P) < 1e-8
    assert res.n == 5
    res2 = paired_t_test([0.3, -0.1, 0.5, 0.2, 0.9, -0.4, 0.1], np.zeros(7))
    assert abs(res2.t - REF_T2) < 1e-8 and abs(res2.p - REF_P2) < 1e-8


def test_paired_t_test_symmetric_and_degenerate():
    res = paired_t_test([1.0, 0.0], [0.0, 1.0])
    assert res.t == 0.0 and res.p == 1.0
    with pytest.raises(DegenerateTestError):
        paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateTestError):
        paired_t_test([1.0], [2.0])


def test_paired_t_test_antisymmetric():
    rng = make_rng(4)
    a, b = rng.standard_normal((2, 9))
    ab, ba = paired_t_test(a, b), paired_t_test(b, a)
    assert ab.t == pytest.approx(-ba.t, rel=1e-14)
    assert ab.p == pytest.approx(ba.p, rel=1e-14)


@pytest.fixture(scope="module")
def small_set():
    gts = generate_dataset(3, 16, 16, 2, 0.15, seed=3)
    return gts


def test_ground_truth_scores_perfectly(small_set):
    samples = prepare_samples(small_set, 1, 0.25, seed=0)
    rep = evaluate_zero_filling(samples)
    for c in rep.cases:
        assert c.img_nmse == pytest.approx(0.0, abs=1e-20)
        assert c.ksp_nmse == pytest.approx(0.0, abs=1e-20)
        assert c.img_ssim == pytest.approx(1.0) and c.ksp_ssim == pytest.approx(1.0)


def test_zero_filling_degrades_with_acceleration():
    gts = generate_dataset(8, 64, 64, 4, 0.15, seed=17)
    r2 = evaluate_zero_filling(prepare_samples(gts, 2, 0.08, seed=1))
    r4 = evaluate_zero_filling(prepare_samples(gts, 4, 0.08, seed=1))
    assert r4.summary()["img_nmse"][0] > r2.summary()["img_nmse"][0]


def test_report_consistency(small_set):
    samples = prepare_samples(small_set, 2, 0.25, seed=0)
    cfg = CascadeConfig.for_coils(2, hidden=4, reduction=2)
    rep = evaluate(samples, zero_model(cfg), cfg, label="zero")
    summary = rep.summary()
    for key in ("img_nmse", "ksp_ssim"):
        vals = rep.column(key)
        assert summary[key][0] == pytest.approx(np.mean(vals))
        assert summary[key][1] == pytest.approx(np.std(vals, ddof=1))
    lines = rep.records()
    assert len(lines) == 2 * len(samples)
    assert lines[0].startswith("case=0 domain=img nmse=")
    # zero-initialised cascade reproduces zero-filling
    zf = evaluate_zero_filling(samples)
    np.testing.assert_allclose(rep.column("img_nmse"), zf.column("img_nmse"), rtol=1e-9)
    assert "±" in rep.table()


def test_metric_errors_name_the_case():
    s = UndersampledSample(k_sparse=np.zeros((1, 8, 8), complex), mask=None,
                           k_full=np.zeros((1, 8, 8), complex), image_full=np.zeros((1, 8, 8), complex), meta={"case": 5})
    from ddcisenet.metrics import case_metrics
    with pytest.raises(UndefinedMetricError, match="case 5"):
        case_metrics(s.k_sparse, s, 5)
