"""Convolution kernel tests: a slow loop oracle, backend parity, and the
dtype promotion contract."""
import numpy as np
import pytest

from hypercut.diffcore import kernels


def loop_conv2d(x, w, b, stride, pad):
    """Reference forward pass in float64, written as the textbook loop."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, o, oh, ow))
    for bi in range(n):
        for oc in range(o):
            for oy in range(oh):
                for ox in range(ow):
                    patch = xp[bi, :, oy * stride:oy * stride + kh,
                               ox * stride:ox * stride + kw]
                    out[bi, oc, oy, ox] = np.sum(patch * w[oc]) + b[oc]
    return out


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
def test_forward_matches_loop_oracle(stride, pad):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 7, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out = kernels.conv2d_forward(x, w, b, stride, pad)
    np.testing.assert_allclose(out, loop_conv2d(x, w, b, stride, pad),
                               rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("stride", [1, 2])
def test_backward_matches_finite_differences(stride):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 2, 6, 6))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    out = kernels.conv2d_forward(x, w, b, stride, 1)
    gy = rng.standard_normal(out.shape)
    gx, gw, gb = kernels.conv2d_backward(gy, x, w, stride, 1)

    eps = 1e-6
    for arr, grad in ((x, gx), (w, gw), (b, gb)):
        flat = arr.reshape(-1)
        idxs = np.linspace(0, flat.size - 1, 7).astype(int)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            up = np.sum(kernels.conv2d_forward(x, w, b, stride, 1) * gy)
            flat[i] = orig - eps
            down = np.sum(kernels.conv2d_forward(x, w, b, stride, 1) * gy)
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            np.testing.assert_allclose(grad.reshape(-1)[i], fd, rtol=1e-4, atol=1e-6)


def test_backend_parity_float32():
    if kernels.BACKEND != "cython":
        pytest.skip("compiled backend not built")
    py_forward, py_backward = kernels.python_kernels()
    rng = np.random.default_rng(3)
    x = rng.random((4, 3, 8, 8), dtype=np.float32)
    w = (rng.random((5, 3, 3, 3), dtype=np.float32) - 0.5)
    b = rng.random(5, dtype=np.float32)
    out_c = kernels.conv2d_forward(x, w, b, 2, 1)
    out_p = py_forward(x, w, b, 2, 1)
    np.testing.assert_allclose(out_c, out_p, rtol=1e-5, atol=1e-5)
    gy = rng.random(out_c.shape, dtype=np.float32)
    for g_c, g_p in zip(kernels.conv2d_backward(gy, x, w, 2, 1),
                        py_backward(gy, x, w, 2, 1)):
        np.testing.assert_allclose(g_c, g_p, rtol=1e-4, atol=1e-4)


def test_dtype_promotion_to_float64():
    """float32 inputs with float64 weights must compute in float64 (the
    gradient checker upcasts parameters only)."""
    rng = np.random.default_rng(4)
    x32 = rng.random((1, 1, 4, 4), dtype=np.float32)
    w64 = rng.standard_normal((2, 1, 3, 3))
    b64 = rng.standard_normal(2)
    out = kernels.conv2d_forward(x32, w64, b64, 1, 1)
    assert out.dtype == np.float64
    gx, gw, gb = kernels.conv2d_backward(np.ones_like(out), x32, w64, 1, 1)
    assert gx.dtype == gw.dtype == gb.dtype == np.float64


def test_float32_stays_float32():
    rng = np.random.default_rng(5)
    x = rng.random((1, 1, 4, 4), dtype=np.float32)
    w = rng.random((2, 1, 3, 3), dtype=np.float32)
    b = np.zeros(2, dtype=np.float32)
    assert kernels.conv2d_forward(x, w, b, 1, 1).dtype == np.float32


def test_determinism_same_inputs_same_bits():
    rng = np.random.default_rng(6)
    x = rng.random((3, 4, 9, 9), dtype=np.float32)
    w = rng.random((6, 4, 3, 3), dtype=np.float32)
    b = rng.random(6, dtype=np.float32)
    a1 = kernels.conv2d_forward(x, w, b, 1, 1)
    a2 = kernels.conv2d_forward(x, w, b, 1, 1)
    assert np.array_equal(a1, a2)
