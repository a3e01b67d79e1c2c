"""Bit-exact binary dataset storage.

A dataset is a directory with `manifest.json` plus one `sample_%06d.b2v`
file per sample. The .b2v layout: magic "B2V1", little-endian u32 fields
(N+1, H, W, C), the blurry image, then frames 0..N, all raw little-endian
float32 in [frame][row][col][channel] order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .scenes import (SceneDistribution, random_scene_spec, render_sequence,
                     synth_blur)

MAGIC = b"B2V1"


def write_b2v(path, blurry: np.ndarray, frames: np.ndarray):
    frames = np.ascontiguousarray(frames, dtype="<f4")
    n_frames, h, w, c = frames.shape
    blurry = np.ascontiguousarray(blurry, dtype="<f4")
    if blurry.shape != (h, w, c):
        raise ValueError(f"blurry shape {blurry.shape} does not match frames {frames.shape}")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<4I", n_frames, h, w, c))
        f.write(blurry.tobytes())
        f.write(frames.tobytes())


def read_b2v(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad sample magic {magic!r}")
        n_frames, h, w, c = struct.unpack("<4I", f.read(16))
        plane = h * w * c
        blurry = np.frombuffer(f.read(4 * plane), dtype="<f4").reshape(h, w, c)
        frames = np.frombuffer(f.read(4 * plane * n_frames), dtype="<f4")
        frames = frames.reshape(n_frames, h, w, c)
    return blurry.astype(np.float32), frames.astype(np.float32)


def b2v_file_size(n_frames, h, w, c) -> int:
    return 4 + 16 + 4 * h * w * c * (1 + n_frames)


class DatasetStore:
    def __init__(self, root):
        self.root = Path(root)
        with open(self.root / "manifest.json") as f:
            self.manifest = json.load(f)

    @property
    def count(self):
        return self.manifest["count"]

    @property
    def n_frames(self):
        return self.manifest["frames"]

    @property
    def shape(self):
        m = self.manifest
        return (m["height"], m["width"], m["channels"])

    def indices(self, split=None):
        if split is None:
            return list(range(self.count))
        return list(self.manifest["split"][split])

    def sample_path(self, idx) -> Path:
        return self.root / f"sample_{idx:06d}.b2v"

    def load(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Returns (blurry HxWxC, frames (N+1)xHxWxC)."""
        return read_b2v(self.sample_path(idx))

    def load_split(self, split) -> tuple[np.ndarray, np.ndarray]:
        """Stacks a whole split: (blurry (M,H,W,C), frames (M,N+1,H,W,C))."""
        idxs = self.indices(split)
        blurry = []
        frames = []
        for i in idxs:
            b, fr = self.load(i)
            blurry.append(b)
            frames.append(fr)
        return np.stack(blurry), np.stack(frames)


def generate_dataset(out_dir, count, seed, dist: SceneDistribution | None = None,
                     test_ratio=0.2) -> DatasetStore:
    """Render `count` (blurry, sequence) samples and write them as a store.

    Deterministic in (count, seed, dist): the same call twice produces
    byte-identical directories.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0 <= test_ratio < 1:
        raise ValueError(f"test ratio must be in [0, 1), got {test_ratio}")
    dist = dist or SceneDistribution()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    for i in range(count):
        spec = random_scene_spec(rng, dist)
        seq = render_sequence(spec, seed=seed)
        blur = synth_blur(seq)
        write_b2v(out_dir / f"sample_{i:06d}.b2v", blur.image, seq.frames)

    perm = np.random.default_rng(seed + 1).permutation(count)
    n_test = int(round(count * test_ratio))
    split = {
        "test": sorted(int(i) for i in perm[:n_test]),
        "train": sorted(int(i) for i in perm[n_test:]),
    }
    manifest = {
        "count": count,
        "frames": dist.n_frames,
        "height": dist.height,
        "width": dist.width,
        "channels": dist.channels,
        "seed": seed,
        "static": dist.static,
        "split": split,
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return DatasetStore(out_dir)
