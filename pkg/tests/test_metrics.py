import math

import numpy as np
import pytest

from dualct.metrics import METRIC_COLUMNS, MetricsReport, psnr, ssim, w_psnr, w_ssim
from oracles import psnr_loop, ssim_loop


def test_psnr_examples(rng):
    a = rng.random((8, 8, 8))
    assert psnr(a, a) == math.inf
    b = a + 0.1
    assert psnr(b, a) == pytest.approx(20.0, abs=1e-10)
    c = rng.random((8, 8, 8))
    assert psnr(c, a) == pytest.approx(psnr_loop(c, a), abs=1e-10)
    with pytest.raises(ValueError):
        psnr(a, a[:4])


def test_psnr_decreases_with_noise(rng):
    a = rng.random((10, 10, 10))
    n = rng.standard_normal(a.shape)
    vals = [psnr(a + s * n, a) for s in (0.01, 0.05, 0.1)]
    assert vals[0] > vals[1] > vals[2]


def test_ssim_examples(rng):
    a = rng.random((9, 9, 9))
    assert ssim(a, a) == pytest.approx(100.0, abs=1e-12)
    c = np.full((8, 8, 8), 0.3)
    v = ssim(c, c + 0.2)
    assert v < 100 and v == pytest.approx(ssim_loop(c, c + 0.2), abs=1e-10)
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(ssim_loop(a, b), abs=1e-10)
    assert ssim(a, b) == ssim(b, a)
    with pytest.raises(ValueError):
        ssim(a[:5], b[:5])


def test_uniform_mask_reduces_to_plain(rng):
    a, b = rng.random((2, 9, 9, 9))
    for s in (1.0, 0.25):
        m = np.full(a.shape, s)
        assert abs(w_psnr(a, b, m) - psnr(a, b)) <= 1e-12
        assert abs(w_ssim(a, b, m) - ssim(a, b)) <= 1e-12


def test_noise_outside_roi(rng):
    a = rng.random((9, 9, 9))
    mask = np.zeros(a.shape)
    mask[:, :, :4] = 1
    b = a.copy()
    b[:, :, 4:] += 0.2
    assert w_psnr(b, a, mask) == math.inf


def test_half_mask_matches_masked_loop(rng):
    a, b = rng.random((2, 10, 9, 8))
    mask = np.zeros(a.shape)
    mask[:5] = 1
    expected = psnr_loop(a[:5], b[:5])
    assert w_psnr(a, b, mask) == pytest.approx(expected, abs=1e-10)
    assert w_ssim(a, b, mask) == pytest.approx(ssim_loop(a, b, weights=mask), abs=1e-10)


def test_background_corruption_scores_higher(rng):
    gt = rng.random((24, 24, 24))
    roi = np.zeros(gt.shape)
    roi[4:20, 4:20, 4:20] = 1
    noise = 0.1 * rng.standard_normal(gt.shape)
    bg = gt + noise * (roi == 0)
    fg = gt + noise * (roi == 1)
    assert w_psnr(bg, gt, roi) > w_psnr(fg, gt, roi)
    assert w_ssim(bg, gt, roi) > w_ssim(fg, gt, roi)


def test_mask_errors(rng):
    a = rng.random((8, 8, 8))
    with pytest.raises(ValueError, match="zero"):
        w_psnr(a, a, np.zeros(a.shape))
    with pytest.raises(ValueError):
        w_ssim(a, a, -np.ones(a.shape))
    with pytest.raises(ValueError):
        w_psnr(a, a, np.ones((8, 8, 7)))


def test_report_csv(rng):
    a, b = rng.random((2, 8, 8, 8))
    rep = MetricsReport()
    rep.add("x", a, b)
    rep.add("y", b, b)
    text = rep.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(METRIC_COLUMNS)
    assert lines[2].startswith("y,inf")
    assert rep.ssim_pct == pytest.approx((ssim(a, b) + 100) / 2)
