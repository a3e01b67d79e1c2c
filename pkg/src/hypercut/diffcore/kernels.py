"""Convolution kernels with a compiled fast path.

The 2-D convolution forward/backward passes dominate training time, so they
are implemented twice: a Cython extension (built by setup.py) and a pure
numpy im2col fallback. The backend is picked once at import time; set
``HYPERCUT_BACKEND=python`` or ``HYPERCUT_BACKEND=cython`` to force one.

Both backends accept float32 or float64 arrays and are deterministic.
"""
from __future__ import annotations

import os

import numpy as np


# -- pure numpy backend ---------------------------------------------------------

def _im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        i_max = i + stride * oh
        for j in range(kw):
            j_max = j + stride * ow
            cols[:, :, i, j] = x[:, :, i:i_max:stride, j:j_max:stride]
    return cols.reshape(n, c * kh * kw, oh * ow), oh, ow


def _col2im(cols, x_shape, kh, kw, stride, pad, oh, ow):
    n, c, h, w = x_shape
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    x = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        i_max = i + stride * oh
        for j in range(kw):
            j_max = j + stride * ow
            x[:, :, i:i_max:stride, j:j_max:stride] += cols[:, :, i, j]
    if pad:
        return x[:, :, pad:-pad, pad:-pad]
    return x


def _py_conv2d_forward(x, w, b, stride, pad):
    n = x.shape[0]
    o, _, kh, kw = w.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    out = np.einsum("of,nfp->nop", w.reshape(o, -1), cols, optimize=True)
    out += b.reshape(1, o, 1)
    return np.ascontiguousarray(out.reshape(n, o, oh, ow))


def _py_conv2d_backward(gy, x, w, stride, pad):
    n = x.shape[0]
    o, _, kh, kw = w.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    gy_flat = gy.reshape(n, o, oh * ow)
    gw = np.einsum("nop,nfp->of", gy_flat, cols, optimize=True).reshape(w.shape)
    gb = gy_flat.sum(axis=(0, 2))
    gcols = np.einsum("of,nop->nfp", w.reshape(o, -1), gy_flat, optimize=True)
    gx = _col2im(gcols, x.shape, kh, kw, stride, pad, oh, ow)
    return gx, gw, gb


# -- backend selection ------------------------------------------------------------

_choice = os.environ.get("HYPERCUT_BACKEND", "auto").lower()
_cy = None
if _choice in ("auto", "cython"):
    try:
        from . import _convkernels as _cy
    except ImportError:
        if _choice == "cython":
            raise
        _cy = None
elif _choice != "python":
    raise ValueError(f"HYPERCUT_BACKEND must be auto/cython/python, got {_choice!r}")

BACKEND = "cython" if _cy is not None else "python"


def conv2d_forward(x, w, b, stride, pad):
    dtype = np.result_type(x.dtype, w.dtype, b.dtype)
    x = np.ascontiguousarray(x, dtype=dtype)
    w = np.ascontiguousarray(w, dtype=dtype)
    b = np.ascontiguousarray(b, dtype=dtype)
    if _cy is not None:
        return _cy.conv2d_forward(x, w, b, stride, pad)
    return _py_conv2d_forward(x, w, b, stride, pad)


def conv2d_backward(gy, x, w, stride, pad):
    dtype = np.result_type(gy.dtype, x.dtype, w.dtype)
    gy = np.ascontiguousarray(gy, dtype=dtype)
    x = np.ascontiguousarray(x, dtype=dtype)
    w = np.ascontiguousarray(w, dtype=dtype)
    if _cy is not None:
        return _cy.conv2d_backward(gy, x, w, stride, pad)
    return _py_conv2d_backward(gy, x, w, stride, pad)


def python_kernels():
    """Expose the fallback implementations regardless of the active backend
    (used by tests and the benchmark)."""
    return _py_conv2d_forward, _py_conv2d_backward
