"""Metric tests: PSNR/SSIM oracles, pair-metric identities, reports."""
import json

import numpy as np
import pytest

from hypercut.metrics import (MetricReport, PSNR_CAP, evaluate_predictions,
                              mean_ppsnr, mean_pssim, ppsnr_k, pssim_k, psnr,
                              ssim)


def test_psnr_hand_oracle_20db():
    a = np.zeros((4, 4))
    b = np.full((4, 4), 0.1)
    # mse = 0.01 -> 10 * log10(1/0.01) = 20 dB
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)


def test_psnr_symmetric_and_capped():
    rng = np.random.default_rng(0)
    a = rng.random((8, 8))
    b = rng.random((8, 8))
    assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-12)
    assert psnr(a, a) == PSNR_CAP


def test_psnr_monotone_in_noise():
    rng = np.random.default_rng(1)
    base = rng.random((16, 16))
    vals = [psnr(base, base + eps) for eps in (0.01, 0.05, 0.2)]
    assert vals[0] > vals[1] > vals[2]


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2)), np.zeros((3, 3)))


def test_ssim_identity_and_range():
    rng = np.random.default_rng(2)
    a = rng.random((16, 16))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    b = rng.random((16, 16))
    assert -1.0 <= ssim(a, b) <= 1.0
    assert ssim(a, b) < 1.0


def test_ssim_window_too_large():
    with pytest.raises(ValueError):
        ssim(np.zeros((4, 4)), np.zeros((4, 4)), window=8)


def test_ppsnr_takes_better_of_mirror():
    n_frames = 3
    gt = np.stack([np.full((8, 8, 1), v) for v in (0.0, 0.5, 1.0)])
    pred = gt[::-1].copy()  # perfectly reversed prediction
    for k in range(n_frames):
        assert ppsnr_k(pred, gt, k) == PSNR_CAP
    # a prediction matching neither orientation scores the better mismatch
    off = gt + 0.1
    expected = max(psnr(off[0], gt[0]), psnr(off[0], gt[2]))
    assert ppsnr_k(off, gt, 0) == pytest.approx(expected, abs=1e-12)


def test_ppsnr_hand_oracle():
    gt = np.stack([np.zeros((4, 4, 1)), np.full((4, 4, 1), 0.5),
                   np.ones((4, 4, 1))])
    pred = np.stack([np.full((4, 4, 1), 0.1), np.full((4, 4, 1), 0.5),
                     np.ones((4, 4, 1))])
    # frame 0: psnr vs gt[0] = 20 dB, vs gt[2] (all ones, diff 0.9) is worse
    assert ppsnr_k(pred, gt, 0) == pytest.approx(20.0, abs=1e-6)


def test_mean_ppsnr_reversal_invariant_exact():
    rng = np.random.default_rng(3)
    gt = rng.random((7, 8, 8, 1))
    pred = rng.random((7, 8, 8, 1))
    assert mean_ppsnr(pred, gt) == mean_ppsnr(pred[::-1], gt)


def test_pair_average_variant_differs_and_is_reported():
    rng = np.random.default_rng(4)
    gt = rng.random((3, 8, 8, 1))
    pred = rng.random((3, 8, 8, 1))
    default = mean_ppsnr(pred, gt)
    averaged = mean_ppsnr(pred, gt, pair_average=True)
    assert default != averaged
    report = evaluate_predictions(pred[None], gt[None], pair_average=True)
    assert report.ppsnr_variant == "pair-average-max"


def test_pssim_mirror():
    gt = np.stack([np.zeros((8, 8, 1)), np.full((8, 8, 1), 0.5),
                   np.ones((8, 8, 1))])
    pred = gt[::-1].copy()
    for k in range(3):
        assert pssim_k(pred, gt, k) == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(5)
    p = rng.random((3, 8, 8, 1))
    assert mean_pssim(p, gt) == mean_pssim(p[::-1], gt)


def test_frame_index_bounds():
    gt = np.zeros((3, 8, 8, 1))
    with pytest.raises(IndexError):
        ppsnr_k(gt, gt, 3)
    with pytest.raises(IndexError):
        pssim_k(gt, gt, -1)


def test_report_text_and_json():
    report = MetricReport(ppsnr_per_k=[10.0, 20.0], mean_ppsnr=15.0,
                          mean_pssim=0.5, order_agreement=0.75)
    text = report.to_text()
    assert "ppsnr_0=10.0000" in text
    assert "mean_ppsnr=15.0000" in text
    assert "order_agreement=0.7500" in text
    data = json.loads(report.to_json())
    assert data["mean_ppsnr"] == 15.0


def test_evaluate_predictions_aggregates():
    rng = np.random.default_rng(6)
    gts = rng.random((2, 3, 8, 8, 1))
    preds = gts.copy()
    report = evaluate_predictions(preds, gts)
    assert report.mean_ppsnr == PSNR_CAP
    assert report.mean_pssim == pytest.approx(1.0, abs=1e-12)
    assert report.order_agreement is None
