# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled 2-D convolution kernels (NCHW input, OIHW weight).

The patch gather/scatter (im2col / col2im) runs as tight C loops; the
actual multiplies go through numpy's BLAS matmul. Single-threaded gather
and scatter keep the results deterministic; cap BLAS threads via the
usual environment variables for fully reproducible runs.
"""
import numpy as np

cimport cython

ctypedef fused floating:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _gather(floating[:, :, :, ::1] x, floating[:, :, ::1] cols,
                  Py_ssize_t kh, Py_ssize_t kw, int stride, int pad) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t p = cols.shape[2]
    cdef Py_ssize_t ow = 0, oh = 0
    ow = (wd + 2 * pad - kw) // stride + 1
    oh = p // ow
    cdef Py_ssize_t bi, ic, ky, kx, oy, ox, iy, ix, f
    for bi in range(n):
        for ic in range(c):
            for ky in range(kh):
                for kx in range(kw):
                    f = ((ic * kh) + ky) * kw + kx
                    for oy in range(oh):
                        iy = oy * stride + ky - pad
                        for ox in range(ow):
                            ix = ox * stride + kx - pad
                            if 0 <= iy < h and 0 <= ix < wd:
                                cols[bi, f, oy * ow + ox] = x[bi, ic, iy, ix]
                            else:
                                cols[bi, f, oy * ow + ox] = 0.0


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _scatter(floating[:, :, ::1] cols, floating[:, :, :, ::1] gx,
                   Py_ssize_t kh, Py_ssize_t kw, int stride, int pad) noexcept nogil:
    cdef Py_ssize_t n = gx.shape[0], c = gx.shape[1], h = gx.shape[2], wd = gx.shape[3]
    cdef Py_ssize_t p = cols.shape[2]
    cdef Py_ssize_t ow = (wd + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t oh = p // ow
    cdef Py_ssize_t bi, ic, ky, kx, oy, ox, iy, ix, f
    for bi in range(n):
        for ic in range(c):
            for ky in range(kh):
                for kx in range(kw):
                    f = ((ic * kh) + ky) * kw + kx
                    for oy in range(oh):
                        iy = oy * stride + ky - pad
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(ow):
                            ix = ox * stride + kx - pad
                            if 0 <= ix < wd:
                                gx[bi, ic, iy, ix] += cols[bi, f, oy * ow + ox]


def conv2d_forward(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w,
                   floating[::1] b, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (wd + 2 * pad - kw) // stride + 1

    dtype = np.float32 if floating is float else np.float64
    cols_np = np.empty((n, c * kh * kw, oh * ow), dtype=dtype)
    cdef floating[:, :, ::1] cols = cols_np
    _gather(x, cols, kh, kw, stride, pad)

    w_np = np.asarray(w).reshape(o, c * kh * kw)
    out = np.matmul(w_np, cols_np)
    out += np.asarray(b).reshape(1, o, 1)
    return np.ascontiguousarray(out.reshape(n, o, oh, ow))


def conv2d_backward(floating[:, :, :, ::1] gy, floating[:, :, :, ::1] x,
                    floating[:, :, :, ::1] w, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = gy.shape[2], ow = gy.shape[3]

    dtype = np.float32 if floating is float else np.float64
    cols_np = np.empty((n, c * kh * kw, oh * ow), dtype=dtype)
    cdef floating[:, :, ::1] cols = cols_np
    _gather(x, cols, kh, kw, stride, pad)

    gy_np = np.asarray(gy).reshape(n, o, oh * ow)
    w_np = np.asarray(w).reshape(o, c * kh * kw)

    gw = np.matmul(gy_np, cols_np.transpose(0, 2, 1)).sum(axis=0).reshape(o, c, kh, kw)
    gb = gy_np.sum(axis=(0, 2))
    gcols_np = np.ascontiguousarray(np.matmul(w_np.T, gy_np))

    gx_np = np.zeros((n, c, h, wd), dtype=dtype)
    cdef floating[:, :, ::1] gcols = gcols_np
    cdef floating[:, :, :, ::1] gx = gx_np
    _scatter(gcols, gx, kh, kw, stride, pad)
    return gx_np, np.ascontiguousarray(gw), np.ascontiguousarray(gb)
