"""Image-quality metrics: PSNR, SSIM, their pair-based variants, and the
order-agreement rate.

Pair-based metrics score a predicted frame against both the ground-truth
frame at the same index and its mirror, taking the better of the two, so
they are invariant to reversing the prediction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ordering import Hyperplane, OrderEncoder, order_labels

PSNR_CAP = 100.0  # dB returned for (near-)identical images


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def ssim(a: np.ndarray, b: np.ndarray, window=8, k1=0.01, k2=0.03) -> float:
    """Mean structural similarity over non-overlapping square windows."""
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    h, w, c = a.shape
    if h < window or w < window:
        raise ValueError(f"image {h}x{w} is smaller than the {window}x{window} window")
    c1 = k1 ** 2
    c2 = k2 ** 2
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    vals = []
    for i in range(0, h - window + 1, window):
        for j in range(0, w - window + 1, window):
            for ch in range(c):
                pa = a[i:i + window, j:j + window, ch]
                pb = b[i:i + window, j:j + window, ch]
                mu_a, mu_b = pa.mean(), pb.mean()
                var_a, var_b = pa.var(), pb.var()
                cov = ((pa - mu_a) * (pb - mu_b)).mean()
                num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
                den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
                vals.append(num / den)
    return float(np.mean(vals))


def ppsnr_k(pred: np.ndarray, gt: np.ndarray, k: int,
            pair_average=False) -> float:
    """Pair-based PSNR of predicted frame k.

    Default: max(psnr(p_k, x_k), psnr(p_k, x_{N-k})). With pair_average=True,
    the alternative reading: the better of the forward/backward orientations
    scored as the average over the symmetric pair (p_k, p_{N-k}).
    """
    n = gt.shape[0] - 1
    if not 0 <= k <= n:
        raise IndexError(f"frame index {k} out of range 0..{n}")
    if pair_average:
        j = n - k
        forward = 0.5 * (psnr(pred[k], gt[k]) + psnr(pred[j], gt[j]))
        backward = 0.5 * (psnr(pred[k], gt[j]) + psnr(pred[j], gt[k]))
        return max(forward, backward)
    return max(psnr(pred[k], gt[k]), psnr(pred[k], gt[n - k]))


def pssim_k(pred: np.ndarray, gt: np.ndarray, k: int) -> float:
    n = gt.shape[0] - 1
    if not 0 <= k <= n:
        raise IndexError(f"frame index {k} out of range 0..{n}")
    return max(ssim(pred[k], gt[k]), ssim(pred[k], gt[n - k]))


def mean_ppsnr(pred: np.ndarray, gt: np.ndarray, pair_average=False) -> float:
    n_frames = gt.shape[0]
    vals = [ppsnr_k(pred, gt, k, pair_average=pair_average)
            for k in range(n_frames)]
    # reversing the prediction permutes the per-frame values; summing them in
    # sorted order keeps the mean bit-identical under that permutation
    return float(np.mean(np.sort(vals)))


def mean_pssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n_frames = gt.shape[0]
    vals = [pssim_k(pred, gt, k) for k in range(n_frames)]
    return float(np.mean(np.sort(vals)))


def order_agreement(predictions: np.ndarray, encoder: OrderEncoder,
                    h: Hyperplane) -> float:
    """Fraction of predicted sequences carrying the canonical order label 0
    (the negative side of the hyperplane)."""
    labels = order_labels(encoder, h, predictions)
    return float(np.mean(labels == 0))


@dataclass
class MetricReport:
    ppsnr_per_k: list[float]
    mean_ppsnr: float
    mean_pssim: float
    order_agreement: float | None = None
    ppsnr_variant: str = "per-frame-max"

    def to_text(self) -> str:
        lines = [f"ppsnr_variant={self.ppsnr_variant}"]
        for k, v in enumerate(self.ppsnr_per_k):
            lines.append(f"ppsnr_{k}={v:.4f}")
        lines.append(f"mean_ppsnr={self.mean_ppsnr:.4f}")
        lines.append(f"mean_pssim={self.mean_pssim:.6f}")
        if self.order_agreement is not None:
            lines.append(f"order_agreement={self.order_agreement:.4f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def evaluate_predictions(preds: np.ndarray, gts: np.ndarray,
                         encoder: OrderEncoder | None = None,
                         h: Hyperplane | None = None,
                         pair_average=False) -> MetricReport:
    """Aggregate report over a batch: (M, N+1, H, W, C) predictions and
    ground truths."""
    n_frames = gts.shape[1]
    per_k = np.zeros(n_frames)
    pssims = []
    for pred, gt in zip(preds, gts):
        for k in range(n_frames):
            per_k[k] += ppsnr_k(pred, gt, k, pair_average=pair_average)
        pssims.append(mean_pssim(pred, gt))
    per_k /= len(preds)
    agreement = None
    if encoder is not None and h is not None:
        agreement = order_agreement(preds, encoder, h)
    return MetricReport(
        ppsnr_per_k=[float(v) for v in per_k],
        mean_ppsnr=float(per_k.mean()),
        mean_pssim=float(np.mean(pssims)),
        order_agreement=agreement,
        ppsnr_variant="pair-average-max" if pair_average else "per-frame-max",
    )
