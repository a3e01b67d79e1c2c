"""Synthetic moving-shape sequences and the blur formation model.

A scene is a handful of rectangles/discs translating with constant per-frame
velocity over a flat background. The blurry observation is the arithmetic
mean of the N+1 rendered frames (identity camera response), which is
invariant to reversing the sequence - the source of the order ambiguity this
whole package is about.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUPERSAMPLE = 4  # 4x4 subpixel coverage sampling for anti-aliased edges


@dataclass(frozen=True)
class ObjectSpec:
    kind: str                    # "rectangle" or "disc"
    size: float                  # side length / diameter in pixels
    position: tuple[float, float]  # (row, col) of the centre in frame 0
    velocity: tuple[float, float]  # (drow, dcol) pixels per frame
    color: tuple[float, ...]       # one intensity per channel, in [0, 1]

    def __post_init__(self):
        if self.kind not in ("rectangle", "disc"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.size <= 0:
            raise ValueError("object size must be positive")
        if any(v < 0 or v > 1 for v in self.color):
            raise ValueError("object color must lie in [0, 1]")


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    channels: int
    n_frames: int                # N+1
    objects: tuple[ObjectSpec, ...]
    background: tuple[float, ...] = (0.0,)
    directional: bool = False    # guarantees the sequence differs from its reverse

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("a sequence needs at least 2 frames")
        if self.height < 8 or self.width < 8:
            raise ValueError("canvas must be at least 8x8")
        if len(self.background) != self.channels:
            raise ValueError("background must have one value per channel")
        if any(len(o.color) != self.channels for o in self.objects):
            raise ValueError("object colors must have one value per channel")
        if self.directional and not any(o.velocity != (0.0, 0.0) for o in self.objects):
            raise ValueError("a directional scene needs a moving object")


@dataclass
class FrameSequence:
    """Ordered stack of sharp frames, shape (N+1, H, W, C), values in [0, 1]."""
    frames: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 4:
            raise ValueError(f"frames must be (N+1, H, W, C), got {self.frames.shape}")

    def __len__(self):
        return self.frames.shape[0]

    @property
    def n(self):
        """Index of the last frame (sequences run 0..N)."""
        return self.frames.shape[0] - 1


@dataclass
class BlurryObservation:
    image: np.ndarray
    source_seed: int | None = None


def reverse_sequence(seq: FrameSequence) -> FrameSequence:
    return FrameSequence(seq.frames[::-1].copy(), seed=seq.seed)


def _coverage(spec: SceneSpec, obj: ObjectSpec, frame_idx: int) -> np.ndarray:
    """Fraction of each pixel covered by the object, via subpixel sampling."""
    s = SUPERSAMPLE
    rows = (np.arange(spec.height * s) + 0.5) / s
    cols = (np.arange(spec.width * s) + 0.5) / s
    cr = obj.position[0] + frame_idx * obj.velocity[0]
    cc = obj.position[1] + frame_idx * obj.velocity[1]
    dr = rows[:, None] - cr
    dc = cols[None, :] - cc
    half = obj.size / 2.0
    if obj.kind == "rectangle":
        inside = (np.abs(dr) <= half) & (np.abs(dc) <= half)
    else:
        inside = dr * dr + dc * dc <= half * half
    inside = inside.astype(np.float32)
    return inside.reshape(spec.height, s, spec.width, s).mean(axis=(1, 3))


def render_sequence(spec: SceneSpec, seed: int | None = None) -> FrameSequence:
    """Rasterize all frames; objects are composited in list order."""
    frames = np.empty((spec.n_frames, spec.height, spec.width, spec.channels),
                      dtype=np.float32)
    bg = np.asarray(spec.background, dtype=np.float32)
    seen = [False] * len(spec.objects)
    for k in range(spec.n_frames):
        img = np.broadcast_to(bg, (spec.height, spec.width, spec.channels)).copy()
        for j, obj in enumerate(spec.objects):
            alpha = _coverage(spec, obj, k)
            if alpha.any():
                seen[j] = True
            color = np.asarray(obj.color, dtype=np.float32)
            img = img * (1.0 - alpha[..., None]) + color * alpha[..., None]
        frames[k] = img
    for j, ok in enumerate(seen):
        if not ok:
            raise ValueError(f"object {j} lies outside the canvas in every frame")
    return FrameSequence(frames, seed=seed)


def synth_blur(seq: FrameSequence) -> BlurryObservation:
    """Mean of the N+1 frames, accumulated over symmetric (k, N-k) pairs so
    the result is bit-identical under sequence reversal."""
    frames = seq.frames
    n_frames = frames.shape[0]
    if n_frames < 2:
        raise ValueError("blur formation needs at least 2 frames")
    total = np.zeros(frames.shape[1:], dtype=np.float32)
    for k in range(n_frames // 2):
        total += frames[k] + frames[n_frames - 1 - k]
    if n_frames % 2 == 1:
        total += frames[n_frames // 2]
    return BlurryObservation(total / np.float32(n_frames), source_seed=seq.seed)


# -- random scene distribution ----------------------------------------------------

@dataclass(frozen=True)
class SceneDistribution:
    height: int = 32
    width: int = 32
    channels: int = 1
    n_frames: int = 7
    min_objects: int = 1
    max_objects: int = 2
    min_speed: float = 1.2
    max_speed: float = 2.5
    static: bool = False         # zero-velocity scenes (degenerate by design)


def random_scene_spec(rng: np.random.Generator, dist: SceneDistribution) -> SceneSpec:
    n_obj = int(rng.integers(dist.min_objects, dist.max_objects + 1))
    travel = dist.n_frames - 1
    objects = []
    for _ in range(n_obj):
        kind = "rectangle" if rng.random() < 0.5 else "disc"
        size = float(rng.uniform(0.2, 0.45) * min(dist.height, dist.width))
        margin = 2.0
        if dist.static:
            vel = (0.0, 0.0)
        else:
            angle = rng.uniform(0, 2 * np.pi)
            max_travel = min(dist.height, dist.width) - 2 * margin - 1
            speed = min(rng.uniform(dist.min_speed, dist.max_speed),
                        max_travel / max(travel, 1))
            vel = (speed * np.sin(angle), speed * np.cos(angle))
        # choose a start so the whole centre path stays inside the canvas
        dr, dc = travel * vel[0], travel * vel[1]
        r0 = rng.uniform(margin + max(0.0, -dr), dist.height - margin - max(0.0, dr))
        c0 = rng.uniform(margin + max(0.0, -dc), dist.width - margin - max(0.0, dc))
        color = tuple(float(v) for v in rng.uniform(0.5, 1.0, size=dist.channels))
        objects.append(ObjectSpec(kind=kind, size=size, position=(float(r0), float(c0)),
                                  velocity=(float(vel[0]), float(vel[1])), color=color))
    background = tuple(float(v) for v in rng.uniform(0.0, 0.2, size=dist.channels))
    return SceneSpec(height=dist.height, width=dist.width, channels=dist.channels,
                     n_frames=dist.n_frames, objects=tuple(objects),
                     background=background, directional=not dist.static)
