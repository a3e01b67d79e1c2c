"""Small layer library on top of the Tensor tape.

Parameters are float32 Tensors with ``requires_grad=True``, initialised
uniformly in +-sqrt(6 / (fan_in + fan_out)) from a seeded generator so that
runs are reproducible.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    """Base class: collects named parameters from child layers/tensors."""

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                params[name] = value
            elif isinstance(value, Module):
                for sub, p in value.parameters().items():
                    params[f"{name}.{sub}"] = p
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, p in item.parameters().items():
                            params[f"{name}.{i}.{sub}"] = p
        return params

    def load_state(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) ^ set(state)
        if missing:
            raise KeyError(f"parameter name mismatch: {sorted(missing)}")
        for name, p in params.items():
            arr = state[name]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}


class Conv2d(Module):
    def __init__(self, rng, in_ch, out_ch, ksize=3, stride=1, pad=1):
        fan_in = in_ch * ksize * ksize
        fan_out = out_ch * ksize * ksize
        self.w = Tensor(glorot_uniform(rng, (out_ch, in_ch, ksize, ksize), fan_in, fan_out),
                        requires_grad=True)
        self.b = Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True)
        self.stride = stride
        self.pad = pad

    def __call__(self, x: Tensor) -> Tensor:
        return x.conv2d(self.w, self.b, stride=self.stride, pad=self.pad)


class Linear(Module):
    def __init__(self, rng, in_features, out_features):
        self.w = Tensor(glorot_uniform(rng, (in_features, out_features),
                                       in_features, out_features), requires_grad=True)
        self.b = Tensor(np.zeros(out_features, dtype=np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class ResBlock(Module):
    """Two same-size 3x3 convolutions with a skip connection."""

    def __init__(self, rng, channels):
        self.conv1 = Conv2d(rng, channels, channels)
        self.conv2 = Conv2d(rng, channels, channels)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.conv1(x).leaky_relu()
        h = self.conv2(h)
        return (x + h).leaky_relu()
