"""Multi-frame deblurring: one blurry image in, N+1 sharp frames out.

Three training regimes are supported:
  - "rec": plain per-frame mean squared error (collapses to pair averages
    because the blur is orientation-blind),
  - "oi": the order-invariant pair-norm loss (accepts the reversed and
    sign-flipped solutions),
  - either of those plus the hyperplane-side regularizer, which pins every
    predicted pair to the negative side and removes the ambiguity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import Adam, Conv2d, Module, ResBlock, Tensor, concat
from .metrics import mean_ppsnr, order_agreement
from .ordering import Hyperplane, OrderEncoder, symmetric_pair_indices


def to_nchw_seq(frames: np.ndarray) -> np.ndarray:
    """(M, N+1, H, W, C) -> (M, N+1, C, H, W)."""
    return np.ascontiguousarray(np.transpose(frames, (0, 1, 4, 2, 3)))


def to_hwc_seq(frames: np.ndarray) -> np.ndarray:
    """(M, N+1, C, H, W) -> (M, N+1, H, W, C)."""
    return np.ascontiguousarray(np.transpose(frames, (0, 1, 3, 4, 2)))


class FramePredictor(Module):
    """Small U-net mapping (B, C, H, W) to (B, N+1, C, H, W) with a
    saturating (sigmoid) output so frames stay in [0, 1].

    Skip connections (the half-resolution features and the raw input) feed
    the decoder directly, so fine detail does not have to survive the
    bottleneck."""

    def __init__(self, height, width, channels, n_frames, seed=0, base_width=24):
        rng = np.random.default_rng(seed)
        self.height = height
        self.width = width
        self.channels = channels
        self.n_frames = n_frames
        w1, w2 = base_width, base_width * 2
        self.down1 = Conv2d(rng, channels, w1, stride=2)
        self.down2 = Conv2d(rng, w1, w2, stride=2)
        self.res = ResBlock(rng, w2)
        self.up1 = Conv2d(rng, w2, w1)
        self.up2 = Conv2d(rng, 2 * w1, w1)
        self.out = Conv2d(rng, w1 + channels, n_frames * channels)

    def forward(self, y: Tensor) -> Tensor:
        """Returns the frame stack as a (B, N+1, C, H, W) tensor."""
        if y.shape[1:] != (self.channels, self.height, self.width):
            raise ValueError(f"predictor expects (B, {self.channels}, {self.height}, "
                             f"{self.width}), got {y.shape}")
        b = y.shape[0]
        d1 = self.down1(y).leaky_relu()
        f = self.down2(d1).leaky_relu()
        f = self.res(f)
        f = self.up1(f.upsample2x()).leaky_relu()
        f = self.up2(concat([f, d1], axis=1).upsample2x()).leaky_relu()
        f = self.out(concat([f, y], axis=1)).sigmoid()
        return f.reshape(b, self.n_frames, self.channels, self.height, self.width)

    def predict(self, blurry: np.ndarray) -> np.ndarray:
        """(M, H, W, C) blurry images -> (M, N+1, H, W, C) frames, batched."""
        out = []
        for i in range(0, blurry.shape[0], 256):
            chunk = np.ascontiguousarray(np.transpose(blurry[i:i + 256], (0, 3, 1, 2)))
            out.append(self.forward(Tensor(chunk)).data)
        return to_hwc_seq(np.concatenate(out))


# -- losses ---------------------------------------------------------------------


def _frame(pred: Tensor, k: int) -> Tensor:
    return pred.narrow(1, k, 1)


def loss_rec(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Mean squared error over frames and pixels."""
    if pred.shape != gt.shape:
        raise ValueError(f"loss shape mismatch: {pred.shape} vs {gt.shape}")
    diff = pred - Tensor(gt.astype(pred.dtype, copy=False))
    return (diff * diff).mean()


def loss_order_invariant(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Pair-norm loss on (B, N+1, C, H, W) stacks.

    Per symmetric pair (k, N-k):
        | ||p_k - p_{N-k}|| - ||x_k - x_{N-k}|| |
      + | ||p_k + p_{N-k}|| - ||x_k + x_{N-k}|| |
    with L2 norms over pixels, summed over pairs; the middle frame (even N)
    gets a plain squared-error term. Mean over the batch.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"loss shape mismatch: {pred.shape} vs {gt.shape}")
    n_frames = pred.shape[1]
    n = n_frames - 1
    gt = gt.astype(pred.dtype, copy=False)
    axes = (1, 2, 3, 4)

    per_sample = None
    for k, j in symmetric_pair_indices(n_frames):
        pk, pj = _frame(pred, k), _frame(pred, j)
        xk, xj = gt[:, k:k + 1], gt[:, j:j + 1]
        # the 1e-12 stabiliser (applied to both sides) keeps sqrt differentiable
        # when a predicted pair is exactly equal or exactly opposite
        d_norm = (((pk - pj) * (pk - pj)).sum(axis=axes) + 1e-12).sqrt()
        s_norm = (((pk + pj) * (pk + pj)).sum(axis=axes) + 1e-12).sqrt()
        dx = np.sqrt(((xk - xj) ** 2).sum(axis=axes) + 1e-12)
        sx = np.sqrt(((xk + xj) ** 2).sum(axis=axes) + 1e-12)
        term = (d_norm - Tensor(dx)).abs() + (s_norm - Tensor(sx)).abs()
        per_sample = term if per_sample is None else per_sample + term
    if n % 2 == 0:
        mid = n // 2
        diff = _frame(pred, mid) - Tensor(gt[:, mid:mid + 1])
        per_sample = per_sample + (diff * diff).mean(axis=axes)
    return per_sample.mean()


def hypercut_regularizer(pred: Tensor, encoder: OrderEncoder,
                         h: Hyperplane) -> Tensor:
    """Sum over symmetric pairs of the signed projection of the predicted
    pair embedding, averaged over the batch. Gradients reach the predictor
    only; the encoder is frozen and the hyperplane is a constant."""
    b, n_frames, c, height, width = pred.shape
    hv = Tensor(h.normal.reshape(-1, 1))
    total = None
    for k, j in symmetric_pair_indices(n_frames):
        pk = _frame(pred, k).reshape(b, c, height, width)
        pj = _frame(pred, j).reshape(b, c, height, width)
        proj = encoder.embed_pairs(pk, pj) @ hv
        term = proj.mean()
        total = term if total is None else total + term
    return total


@dataclass
class LossConfig:
    base: str = "oi"                 # "rec" or "oi"
    alpha: float = 0.2
    encoder: OrderEncoder | None = None
    hyperplane: Hyperplane | None = None

    def __post_init__(self):
        if self.base not in ("rec", "oi"):
            raise ValueError(f"unknown base loss {self.base!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.alpha > 0 and (self.encoder is None or self.hyperplane is None):
            raise ValueError("alpha > 0 requires a trained order encoder")

    @classmethod
    def from_regime(cls, regime: str, alpha=0.2, encoder=None, hyperplane=None):
        base, _, reg = regime.partition("+")
        if reg not in ("", "hypercut"):
            raise ValueError(f"unknown regime {regime!r}")
        return cls(base=base, alpha=alpha if reg else 0.0,
                   encoder=encoder, hyperplane=hyperplane)


def total_loss(pred: Tensor, gt: np.ndarray, config: LossConfig) -> Tensor:
    base_fn = loss_rec if config.base == "rec" else loss_order_invariant
    base = base_fn(pred, gt)
    if config.alpha == 0:
        return base
    return base + config.alpha * hypercut_regularizer(pred, config.encoder,
                                                      config.hyperplane)


# -- training -------------------------------------------------------------------


@dataclass
class DeblurTrainConfig:
    epochs: int = 24
    batch_size: int = 32
    lr: float = 2e-3
    seed: int = 0
    eval_subset: int = 64   # test samples used for the per-epoch log line


@dataclass
class DeblurTrainResult:
    model: FramePredictor
    log: list[str] = field(default_factory=list)


def train_deblur(train_blurry: np.ndarray, train_frames: np.ndarray,
                 loss_config: LossConfig, config: DeblurTrainConfig,
                 test_blurry: np.ndarray | None = None,
                 test_frames: np.ndarray | None = None) -> DeblurTrainResult:
    """Train a FramePredictor; inputs are (M, H, W, C) blurry images and
    (M, N+1, H, W, C) ground-truth sequences."""
    if train_blurry.shape[0] == 0:
        raise ValueError("training dataset is empty")
    m, height, width, channels = train_blurry.shape
    n_frames = train_frames.shape[1]
    if loss_config.encoder is not None:
        enc = loss_config.encoder
        if (enc.height, enc.width, enc.channels) != (height, width, channels):
            raise ValueError("encoder geometry does not match the dataset")
        for p in enc.parameters().values():   # frozen during deblur training
            p.requires_grad = False

    model = FramePredictor(height, width, channels, n_frames, seed=config.seed)
    opt = Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)

    x = np.ascontiguousarray(np.transpose(train_blurry, (0, 3, 1, 2)))
    gt = to_nchw_seq(train_frames)
    log = []
    for epoch in range(config.epochs):
        # constant learning rate on purpose: the regularizer resolves the
        # orientation of one training sample at a time, and a decayed step
        # freezes that process before it finishes
        perm = rng.permutation(m)
        total = 0.0
        batches = 0
        for start in range(0, m, config.batch_size):
            idx = perm[start:start + config.batch_size]
            pred = model.forward(Tensor(x[idx]))
            loss = total_loss(pred, gt[idx], loss_config)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data)
            batches += 1

        ppsnr_val, agreement = float("nan"), float("nan")
        if test_blurry is not None and test_blurry.shape[0] > 0:
            sub = slice(0, config.eval_subset)
            preds = model.predict(test_blurry[sub])
            ppsnr_val = float(np.mean([mean_ppsnr(p, g) for p, g in
                                       zip(preds, test_frames[sub])]))
            if loss_config.encoder is not None:
                agreement = order_agreement(preds, loss_config.encoder,
                                            loss_config.hyperplane)
        log.append(f"epoch={epoch} loss={total / batches:.6f} "
                   f"test_ppsnr_mean={ppsnr_val:.4f} order_agreement={agreement:.4f}")
    return DeblurTrainResult(model=model, log=log)
