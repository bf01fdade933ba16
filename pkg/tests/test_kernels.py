"""Backend parity and correctness of the convolution/pooling kernels."""

import numpy as np
import pytest

from vbforce import kernels
from vbforce.kernels import reference as ref

rng = np.random.default_rng(7)


def naive_conv2d(x, w, b, pad=1, stride=1):
    """Direct nested-loop convolution oracle (NHWC, same ordering)."""
    n, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    out = np.zeros((n, oh, ow, cout))
    for bi in range(n):
        for i in range(oh):
            for j in range(ow):
                for f in range(cout):
                    acc = 0.0
                    for ki in range(kh):
                        for kj in range(kw):
                            for c in range(cin):
                                acc += xp[bi, i * stride + ki, j * stride + kj, c] \
                                    * w[ki, kj, c, f]
                    out[bi, i, j, f] = acc + b[f]
    return out


@pytest.mark.parametrize("pad,stride", [(0, 1), (1, 1), (1, 2), (2, 3)])
def test_backends_agree_bitwise(pad, stride):
    x = np.ascontiguousarray(rng.standard_normal((2, 9, 11, 3)))
    a = kernels.im2col(x, 3, 3, pad, stride)
    b = ref.im2col(x, 3, 3, pad, stride)
    assert np.array_equal(a, b)
    g = np.ascontiguousarray(rng.standard_normal(a.shape))
    assert np.array_equal(kernels.col2im(g, x.shape, 3, 3, pad, stride),
                          ref.col2im(g, x.shape, 3, 3, pad, stride))


def test_pool_backends_agree_bitwise():
    x = np.ascontiguousarray(rng.standard_normal((3, 8, 6, 5)))
    o1, a1 = kernels.maxpool2x2(x)
    o2, a2 = ref.maxpool2x2(x)
    assert np.array_equal(o1, o2)
    assert np.array_equal(a1, a2)
    d = np.ascontiguousarray(rng.standard_normal(o1.shape))
    assert np.array_equal(kernels.maxpool2x2_backward(d, a1, x.shape),
                          ref.maxpool2x2_backward(d, a2, x.shape))


def test_im2col_matmul_equals_naive_convolution():
    x = np.ascontiguousarray(rng.standard_normal((2, 8, 8, 3)))
    w = rng.standard_normal((3, 3, 3, 4))
    b = rng.standard_normal(4)
    cols = kernels.im2col(x, 3, 3, 1, 1)
    out = (cols @ w.reshape(-1, 4) + b).reshape(2, 8, 8, 4)
    assert np.allclose(out, naive_conv2d(x, w, b), atol=1e-10)


def test_col2im_is_adjoint_of_im2col():
    # <im2col(x), g> == <x, col2im(g)> for random x, g
    x = np.ascontiguousarray(rng.standard_normal((2, 6, 7, 2)))
    cols = kernels.im2col(x, 3, 3, 1, 1)
    g = np.ascontiguousarray(rng.standard_normal(cols.shape))
    lhs = float((cols * g).sum())
    rhs = float((x * kernels.col2im(g, x.shape, 3, 3, 1, 1)).sum())
    assert abs(lhs - rhs) < 1e-9


def test_maxpool_selects_max_and_routes_gradient():
    x = np.ascontiguousarray(rng.standard_normal((1, 4, 4, 1)))
    out, arg = kernels.maxpool2x2(x)
    for i in range(2):
        for j in range(2):
            window = x[0, 2 * i:2 * i + 2, 2 * j:2 * j + 2, 0]
            assert out[0, i, j, 0] == window.max()
    d = np.ascontiguousarray(np.ones_like(out))
    dx = kernels.maxpool2x2_backward(d, arg, x.shape)
    assert dx.sum() == 4.0
    assert ((dx != 0) == (x == np.repeat(np.repeat(out, 2, 1), 2, 2))).all()


def test_pure_python_env_var_selects_fallback():
    import subprocess
    import sys

    code = "from vbforce import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code],
                         env={"VBFORCE_PURE_PYTHON": "1", "PATH": "/usr/bin:/bin"},
                         capture_output=True, text=True)
    assert out.stdout.strip() == "numpy"
