"""Unsupervised sequence ordering via hyperplane separation.

A frame pair (x_k, x_{N-k}) is embedded as a unit vector; a fixed random
unit normal splits the embedding space in two. Training pushes the
embeddings of a pair and of its swapped counterpart onto opposite sides, so
the side becomes an order label for the whole sequence.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .diffcore import (Adam, Conv2d, Linear, Module, ResBlock, Tensor, concat,
                       load_checkpoint, save_checkpoint)

HYPERPLANE_MAGIC = b"HPLN1"


def _binomial5_kernel(channels: int) -> np.ndarray:
    """Depthwise 5x5 binomial smoothing kernel as an OIHW conv weight."""
    row = np.array([1.0, 4.0, 6.0, 4.0, 1.0], dtype=np.float32)
    k2 = np.outer(row, row)
    k2 /= k2.sum()
    w = np.zeros((channels, channels, 5, 5), dtype=np.float32)
    for i in range(channels):
        w[i, i] = k2
    return w


@dataclass(frozen=True)
class Hyperplane:
    """Fixed unit normal in R^n. Immutable for the lifetime of a model."""
    normal: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=np.float32))
        norm = float(np.linalg.norm(self.normal))
        if abs(norm - 1.0) > 1e-5:
            raise ValueError(f"hyperplane normal must be unit length, got {norm}")
        self.normal.setflags(write=False)

    @property
    def dim(self):
        return self.normal.shape[0]


def sample_hyperplane(dim: int, seed: int) -> Hyperplane:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    return Hyperplane(normal=(v / np.linalg.norm(v)).astype(np.float32), seed=seed)


@dataclass(frozen=True)
class OrderLabel:
    value: int        # 0 = negative side wins, 1 = positive side wins
    margin: float     # largest absolute projection among the pairs


class OrderEncoder(Module):
    """Maps a channel-stacked frame pair (2C channels) to a unit vector in R^n.

    The stacked pair is first rewritten as the frame average plus the
    L2-normalized frame difference, so the trunk sees the direction of change
    with its magnitude factored out; pairs drawn from the same sequence then
    present nearly the same difference pattern regardless of their temporal
    gap, which is what makes the per-sequence sides consistent. The embedding
    is the normalized sum of a learned anchor vector and the difference of
    trunk features between the pair and its swap (whose difference channel is
    exactly negated). Swapping the arguments therefore reflects the embedding
    about the anchor, and an identical-frame pair lands exactly on the anchor
    direction (a unit vector that is its own swap). This keeps the two
    stackings of a pair in genuinely opposed positions, which is what the
    separation loss needs; a generic trunk tends to embed both stackings
    almost identically and the loss then stalls at log 2.
    """

    FEATURES = 96

    def __init__(self, height, width, channels, dim=128, seed=0):
        rng = np.random.default_rng(seed)
        self.height = height
        self.width = width
        self.channels = channels
        self.dim = dim
        self.conv1 = Conv2d(rng, 2 * channels, 24, stride=2)
        self.conv2 = Conv2d(rng, 24, 48, stride=2)
        self.conv3 = Conv2d(rng, 48, self.FEATURES, stride=2)
        self.res = ResBlock(rng, self.FEATURES)
        # the head sees the flattened feature map, not a pooled average:
        # ordering needs position-weighted features (where the change sits),
        # which pooling would erase
        out_h, out_w = height, width
        for _ in range(3):
            out_h = (out_h + 1) // 2
            out_w = (out_w + 1) // 2
        self.head = Linear(rng, self.FEATURES * out_h * out_w, dim)
        self.anchor = Tensor((rng.standard_normal(dim) / np.sqrt(dim)).astype(np.float32),
                             requires_grad=True)
        # fixed (non-trainable) smoothing of the difference channel; see
        # embed_nchw
        self._smooth_w = Tensor(_binomial5_kernel(channels))
        self._smooth_b = Tensor(np.zeros(channels, dtype=np.float32))

    def _trunk(self, x: Tensor) -> Tensor:
        h = self.conv1(x).leaky_relu()
        h = self.conv2(h).leaky_relu()
        h = self.conv3(h).leaky_relu()
        h = self.res(h)
        h = h.reshape(h.shape[0], -1)
        return self.head(h)

    def embed_nchw(self, x: Tensor) -> Tensor:
        """Forward pass on an already channel-stacked (B, 2C, H, W) tensor."""
        if x.shape[1] != 2 * self.channels or x.shape[2:] != (self.height, self.width):
            raise ValueError(f"encoder expects (B, {2 * self.channels}, "
                             f"{self.height}, {self.width}), got {x.shape}")
        c = self.channels
        a = x.narrow(1, 0, c)
        b = x.narrow(1, c, c)
        avg = (a + b) * 0.5
        # a fixed binomial blur before normalization: pairs with different
        # temporal gaps show the same change direction at different spatial
        # scales, and low-passing the difference makes those patterns agree
        diff = (a - b).conv2d(self._smooth_w, self._smooth_b, stride=1, pad=2)
        batch = diff.shape[0]
        # unit L2 norm over the whole image, rescaled to an O(1) pixel RMS
        scale = 0.5 * float(np.sqrt(c * self.height * self.width))
        unit = diff.reshape(batch, -1).l2_normalize().reshape(diff.shape) * scale
        fwd = self._trunk(concat([avg, unit], axis=1))
        bwd = self._trunk(concat([avg, -unit], axis=1))
        raw = fwd - bwd + self.anchor.reshape(1, self.dim)
        return raw.l2_normalize()

    def embed_pairs(self, a, b) -> Tensor:
        """Embed frame pairs given as (B, H, W, C) arrays or (B, C, H, W) Tensors.

        Argument order matters: the pair is stacked as channels of `a`
        followed by channels of `b`.
        """
        if isinstance(a, Tensor):
            stacked = concat([a, b], axis=1)
        else:
            a = np.ascontiguousarray(np.transpose(a, (0, 3, 1, 2)))
            b = np.ascontiguousarray(np.transpose(b, (0, 3, 1, 2)))
            if a.shape != b.shape:
                raise ValueError(f"pair shapes differ: {a.shape} vs {b.shape}")
            stacked = Tensor(np.concatenate([a, b], axis=1))
        return self.embed_nchw(stacked)

    def embed_pair(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Single-pair convenience wrapper; returns a unit vector of length n."""
        return self.embed_pairs(a[None], b[None]).data[0]


def symmetric_pair_indices(n_frames: int) -> list[tuple[int, int]]:
    """Pairs (k, N-k) for k < N/2; the self-paired middle frame is excluded."""
    n = n_frames - 1
    return [(k, n - k) for k in range(n_frames // 2)]


def _project(encoder: OrderEncoder, h: Hyperplane, a, b, chunk=512) -> np.ndarray:
    """Signed projections <H([a,b]), h> for a batch of pairs, without autodiff."""
    out = []
    for i in range(0, a.shape[0], chunk):
        e = encoder.embed_pairs(a[i:i + chunk], b[i:i + chunk]).data
        out.append(e @ h.normal)
    return np.concatenate(out) if out else np.empty(0, dtype=np.float32)


def separation_product(encoder: OrderEncoder, h: Hyperplane, a: np.ndarray,
                       b: np.ndarray) -> float:
    """Product of the projections of [a,b] and [b,a]; negative means a hit."""
    fwd = float(encoder.embed_pair(a, b) @ h.normal)
    bwd = float(encoder.embed_pair(b, a) @ h.normal)
    return fwd * bwd


def hypercut_loss(encoder: OrderEncoder, h: Hyperplane, a: np.ndarray,
                  b: np.ndarray) -> Tensor:
    """Mean softplus of the separation products over a batch of pairs.

    Differentiable w.r.t. the encoder parameters; the hyperplane is a
    constant and receives no gradient.
    """
    if a.shape[0] == 0:
        raise ValueError("hypercut loss needs a nonempty batch")
    hv = Tensor(h.normal.reshape(-1, 1))
    fwd = encoder.embed_pairs(a, b) @ hv   # (B, 1)
    bwd = encoder.embed_pairs(b, a) @ hv
    return (fwd * bwd).softplus().mean()


def _pair_arrays(sequences: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flatten (M, N+1, H, W, C) sequences into leading/trailing pair stacks."""
    pairs = symmetric_pair_indices(sequences.shape[1])
    ks = [k for k, _ in pairs]
    js = [j for _, j in pairs]
    a = sequences[:, ks].reshape((-1,) + sequences.shape[2:])
    b = sequences[:, js].reshape((-1,) + sequences.shape[2:])
    return a, b


def hit_rate(encoder: OrderEncoder, h: Hyperplane, sequences: np.ndarray) -> float:
    """Fraction of symmetric pairs whose forward/swapped embeddings fall on
    opposite sides of the hyperplane."""
    if sequences.shape[0] == 0:
        raise ValueError("hit rate needs a nonempty dataset")
    a, b = _pair_arrays(sequences)
    fwd = _project(encoder, h, a, b)
    bwd = _project(encoder, h, b, a)
    return float(np.mean(fwd * bwd < 0))


def _pair_sides(encoder, h, sequences) -> np.ndarray:
    """(M, P) array of +-1 sides of the forward pair embeddings."""
    n_pairs = len(symmetric_pair_indices(sequences.shape[1]))
    a, b = _pair_arrays(sequences)
    proj = _project(encoder, h, a, b).reshape(sequences.shape[0], n_pairs)
    return np.where(proj > 0, 1, -1)


def con_rate(encoder: OrderEncoder, h: Hyperplane, sequences: np.ndarray,
             x: int) -> float:
    """Fraction of X-tuples of distinct symmetric pairs (exhaustive, within a
    sequence) whose forward embeddings share a side of the hyperplane."""
    if sequences.shape[0] == 0:
        raise ValueError("con rate needs a nonempty dataset")
    n_pairs = len(symmetric_pair_indices(sequences.shape[1]))
    if x > n_pairs:
        raise ValueError(f"con@{x} needs at least {x} symmetric pairs, "
                         f"sequences only have {n_pairs}")
    sides = _pair_sides(encoder, h, sequences)
    agree = []
    for combo in combinations(range(n_pairs), x):
        sub = sides[:, combo]
        agree.append(np.all(sub == sub[:, :1], axis=1))
    return float(np.mean(np.concatenate(agree)))


def order_label(encoder: OrderEncoder, h: Hyperplane, frames: np.ndarray) -> OrderLabel:
    """Majority vote over the pair sides; ties go to the largest-margin pair."""
    pairs = symmetric_pair_indices(frames.shape[0])
    a = frames[[k for k, _ in pairs]]
    b = frames[[j for _, j in pairs]]
    proj = _project(encoder, h, a, b)
    if np.all(proj == 0.0):
        raise ValueError("sequence is unorientable: all projections are zero")
    pos = int(np.sum(proj > 0))
    neg = int(np.sum(proj < 0))
    margin = float(np.max(np.abs(proj)))
    if pos > neg:
        value = 1
    elif neg > pos:
        value = 0
    else:
        value = 1 if proj[np.argmax(np.abs(proj))] > 0 else 0
    return OrderLabel(value=value, margin=margin)


def order_labels(encoder: OrderEncoder, h: Hyperplane,
                 sequences: np.ndarray) -> np.ndarray:
    """Vectorized order_label over (M, N+1, H, W, C) sequences."""
    n_pairs = len(symmetric_pair_indices(sequences.shape[1]))
    a, b = _pair_arrays(sequences)
    proj = _project(encoder, h, a, b).reshape(sequences.shape[0], n_pairs)
    if np.any(np.all(proj == 0.0, axis=1)):
        raise ValueError("unorientable sequence: all projections are zero")
    pos = (proj > 0).sum(axis=1)
    neg = (proj < 0).sum(axis=1)
    tie_break = np.take_along_axis(
        proj, np.argmax(np.abs(proj), axis=1)[:, None], axis=1)[:, 0] > 0
    labels = np.where(pos > neg, 1, np.where(neg > pos, 0, tie_break.astype(int)))
    return labels


def project_embeddings_2d(encoder: OrderEncoder, h: Hyperplane,
                          sequences: np.ndarray):
    """Deterministic 2-D view of the pair embeddings (forward + reversed):
    projection onto the top-2 principal components, tagged by hyperplane side.

    Returns (points (2P, 2), sides (2P,) of +-1).
    """
    if sequences.shape[0] < 2:
        raise ValueError("need at least 2 sequences to project")
    a, b = _pair_arrays(sequences)
    embs = []
    for first, second in ((a, b), (b, a)):
        for i in range(0, first.shape[0], 512):
            embs.append(encoder.embed_pairs(first[i:i + 512], second[i:i + 512]).data)
    embs = np.concatenate(embs)
    sides = np.where(embs @ h.normal > 0, 1, -1)

    centered = embs - embs.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    # fix the sign convention so the projection is deterministic
    for i in range(2):
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T, sides


# -- training --------------------------------------------------------------------


def _dihedral(batch: np.ndarray, t: int) -> np.ndarray:
    """Apply one of the 8 axis-aligned symmetries to a (B, H, W, C) batch.

    Rotations other than 180 degrees change the shape of non-square images,
    so those transforms are only used when H == W.
    """
    square = batch.shape[1] == batch.shape[2]
    rot = t % 4 if square else (t % 2) * 2
    out = np.rot90(batch, k=rot, axes=(1, 2))
    if t >= 4:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


@dataclass
class OrderTrainConfig:
    epochs: int = 14
    batch_size: int = 64
    lr: float = 2e-3
    dim: int = 128
    seed: int = 0


@dataclass
class OrderTrainResult:
    encoder: OrderEncoder
    hyperplane: Hyperplane
    log: list[str] = field(default_factory=list)
    degenerate: bool = False


def train_order_encoder(sequences: np.ndarray, config: OrderTrainConfig) -> OrderTrainResult:
    """Fit the order encoder on all symmetric pairs of the given sequences.

    The hyperplane is sampled once from the seeded generator, unit-normalized
    and frozen; only the encoder parameters move.
    """
    if sequences.shape[0] == 0:
        raise ValueError("training dataset is empty")
    m, n_frames, height, width, channels = sequences.shape
    if n_frames < 2:
        raise ValueError("sequences need at least 2 frames")

    h = sample_hyperplane(config.dim, seed=config.seed + 1)
    encoder = OrderEncoder(height, width, channels, dim=config.dim, seed=config.seed)
    a, b = _pair_arrays(sequences)
    n_pairs = a.shape[0]

    opt = Adam(encoder.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed + 2)
    log = []
    for epoch in range(config.epochs):
        # cosine decay with a 5% floor: the loss saturates early and a
        # shrinking step consolidates the pair sides instead of letting
        # them drift
        frac = epoch / max(config.epochs - 1, 1)
        opt.lr = config.lr * (0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * frac)))
        perm = rng.permutation(n_pairs)
        total = 0.0
        batches = 0
        for start in range(0, n_pairs, config.batch_size):
            idx = perm[start:start + config.batch_size]
            # one random flip/rotation per batch (applied to both frames, so
            # it is another valid scene): cheap augmentation that tightens
            # the side consistency across a sequence's pairs
            t = int(rng.integers(8))
            loss = hypercut_loss(encoder, h, _dihedral(a[idx], t),
                                 _dihedral(b[idx], t))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data)
            batches += 1
        train_hit = hit_rate(encoder, h, sequences)
        log.append(f"epoch={epoch} loss={total / batches:.6f} hit={train_hit:.4f}")

    degenerate = hit_rate(encoder, h, sequences) == 0.0
    if degenerate:
        log.append("degenerate: hit rate is 0; every symmetric pair embeds onto "
                   "the same vector as its swap (squares cannot be negative)")
    return OrderTrainResult(encoder=encoder, hyperplane=h, log=log,
                            degenerate=degenerate)


# -- persistence -------------------------------------------------------------------


def save_order_model(out_dir, encoder: OrderEncoder, h: Hyperplane):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "encoder.ckpt", encoder.state())
    with open(out_dir / "hyperplane.bin", "wb") as f:
        f.write(HYPERPLANE_MAGIC)
        f.write(struct.pack("<I", h.dim))
        f.write(np.ascontiguousarray(h.normal, dtype="<f4").tobytes())
        f.write(struct.pack("<q", h.seed))
    meta = {"height": encoder.height, "width": encoder.width,
            "channels": encoder.channels, "dim": encoder.dim}
    with open(out_dir / "encoder.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_order_model(model_dir) -> tuple[OrderEncoder, Hyperplane]:
    model_dir = Path(model_dir)
    with open(model_dir / "encoder.json") as f:
        meta = json.load(f)
    encoder = OrderEncoder(meta["height"], meta["width"], meta["channels"],
                           dim=meta["dim"])
    encoder.load_state(load_checkpoint(model_dir / "encoder.ckpt"))
    with open(model_dir / "hyperplane.bin", "rb") as f:
        magic = f.read(len(HYPERPLANE_MAGIC))
        if magic != HYPERPLANE_MAGIC:
            raise ValueError(f"bad hyperplane sidecar magic {magic!r}")
        (dim,) = struct.unpack("<I", f.read(4))
        normal = np.frombuffer(f.read(4 * dim), dtype="<f4").astype(np.float32)
        (seed,) = struct.unpack("<q", f.read(8))
    return encoder, Hyperplane(normal=normal, seed=seed)
