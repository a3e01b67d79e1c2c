"""Post-processing for paired-camera capture, validated on synthetic streams:
least-squares color correction, fake-blur synthesis from upsampled frames,
and temporal alignment of a blurry image against a sharp stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import psnr


@dataclass(frozen=True)
class ColorCorrection:
    """Affine color map: 3x4 matrix applied to homogeneous RGB [r, g, b, 1]."""
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 4):
            raise ValueError(f"color matrix must be 3x4, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls):
        return cls(np.hstack([np.eye(3), np.zeros((3, 1))]))


def _ensure_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"expected HxWxC image, got shape {img.shape}")
    if img.shape[2] == 1:
        return np.repeat(img, 3, axis=2)
    if img.shape[2] != 3:
        raise ValueError(f"color pipeline needs 1 or 3 channels, got {img.shape[2]}")
    return img


def fit_color_matrix(x: np.ndarray, y: np.ndarray, ridge=1e-8) -> ColorCorrection:
    """Least-squares 3x4 matrix mapping pixels of x to pixels of y.

    Solved via ridge-regularized normal equations so rank-deficient inputs
    (e.g. constant images) still return a usable map.
    """
    x = _ensure_rgb(x)
    y = _ensure_rgb(y)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    px = x.reshape(-1, 3).astype(np.float64)
    py = y.reshape(-1, 3).astype(np.float64)
    a = np.hstack([px, np.ones((px.shape[0], 1))])
    ata = a.T @ a + ridge * np.eye(4)
    atb = a.T @ py
    m = np.linalg.solve(ata, atb).T
    return ColorCorrection(m)


def apply_color(correction: ColorCorrection, img: np.ndarray) -> np.ndarray:
    """Per-pixel affine map, clamped to [0, 1]."""
    rgb = _ensure_rgb(img)
    h, w, _ = rgb.shape
    a = np.hstack([rgb.reshape(-1, 3).astype(np.float64),
                   np.ones((h * w, 1))])
    out = (a @ correction.matrix.T).reshape(h, w, 3)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def synth_fake_blur(frames: np.ndarray) -> np.ndarray:
    """Blur probe from exactly 7 sharp frames: linearly interpolate 2 extra
    frames inside each of the 6 gaps (19 frames total) and average them all."""
    frames = np.asarray(frames, dtype=np.float32)
    if frames.shape[0] != 7:
        raise ValueError(f"fake blur needs exactly 7 frames, got {frames.shape[0]}")
    total = np.zeros(frames.shape[1:], dtype=np.float64)
    count = 0
    for i in range(6):
        a, b = frames[i].astype(np.float64), frames[i + 1].astype(np.float64)
        total += a
        total += (2.0 * a + b) / 3.0
        total += (a + 2.0 * b) / 3.0
        count += 3
    total += frames[6].astype(np.float64)
    count += 1
    assert count == 19
    return (total / count).astype(np.float32)


@dataclass
class AlignmentResult:
    offset: int
    correction: ColorCorrection
    score: float                 # PSNR of the corrected fake blur vs the real blur
    aligned_frames: np.ndarray   # 7 corrected frames starting at `offset`


def temporal_align(y: np.ndarray, stream: np.ndarray) -> AlignmentResult:
    """Find the 7-frame window of `stream` whose color-corrected fake blur
    best matches the real blurry image `y` (largest PSNR; ties take the
    smallest offset)."""
    stream = np.asarray(stream, dtype=np.float32)
    if stream.shape[0] < 7:
        raise ValueError(f"stream has {stream.shape[0]} frames; need at least 7")
    y_rgb = _ensure_rgb(np.asarray(y, dtype=np.float32))

    best_p = -1
    best_score = -np.inf
    best_c = None
    for i in range(stream.shape[0] - 6):
        fake = synth_fake_blur(stream[i:i + 7])
        c = fit_color_matrix(fake, y_rgb)
        score = psnr(apply_color(c, fake), y_rgb)
        if score > best_score:
            best_p, best_score, best_c = i, score, c

    aligned = np.stack([apply_color(best_c, stream[best_p + k]) for k in range(7)])
    return AlignmentResult(offset=best_p, correction=best_c, score=best_score,
                           aligned_frames=aligned)
