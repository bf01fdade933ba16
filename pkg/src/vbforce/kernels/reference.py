"""Pure-numpy implementations of the convolution/pooling kernels.

These are the fallback for :mod:`vbforce.kernels._native` and the
correctness reference in the kernel parity tests.  All arrays are NHWC,
float64, C-contiguous.  Patch elements are ordered (ki, kj, c) with ki
slowest, and both implementations must agree bitwise.
"""

import numpy as np


def conv_out_size(size: int, k: int, pad: int, stride: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh, kw, pad, stride):
    """Lower (N,H,W,C) into patch rows of shape (N*OH*OW, kh*kw*C)."""
    n, h, w, c = x.shape
    oh = conv_out_size(h, kh, pad, stride)
    ow = conv_out_size(w, kw, pad, stride)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    cols = np.empty((n, oh, ow, kh * kw * c), dtype=x.dtype)
    for ki in range(kh):
        for kj in range(kw):
            block = xp[:, ki:ki + (oh - 1) * stride + 1:stride,
                       kj:kj + (ow - 1) * stride + 1:stride, :]
            j = (ki * kw + kj) * c
            cols[..., j:j + c] = block
    return cols.reshape(n * oh * ow, kh * kw * c)


def col2im(cols, shape, kh, kw, pad, stride):
    """Adjoint of :func:`im2col`: scatter patch rows back onto (N,H,W,C)."""
    n, h, w, c = shape
    oh = conv_out_size(h, kh, pad, stride)
    ow = conv_out_size(w, kw, pad, stride)
    cols = cols.reshape(n, oh, ow, kh * kw * c)
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=cols.dtype)
    # descending (ki,kj) order accumulates in the same sequence as the
    # native position-major loops, keeping both backends bitwise equal
    for ki in range(kh - 1, -1, -1):
        for kj in range(kw - 1, -1, -1):
            j = (ki * kw + kj) * c
            xp[:, ki:ki + (oh - 1) * stride + 1:stride,
               kj:kj + (ow - 1) * stride + 1:stride, :] += cols[..., j:j + c]
    if pad:
        return np.ascontiguousarray(xp[:, pad:pad + h, pad:pad + w, :])
    return xp


def maxpool2x2(x):
    """2x2/stride-2 max pool.  Returns (out, argmax) with argmax in 0..3
    encoding the in-window position (row-major); ties keep the first."""
    n, h, w, c = x.shape
    oh, ow = h // 2, w // 2
    windows = x.reshape(n, oh, 2, ow, 2, c).transpose(0, 1, 3, 5, 2, 4)
    windows = windows.reshape(n, oh, ow, c, 4)
    arg = windows.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(windows, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2x2_backward(dout, arg, shape):
    """Route upstream gradients to the argmax positions of the forward pass."""
    n, h, w, c = shape
    oh, ow = h // 2, w // 2
    dwin = np.zeros((n, oh, ow, c, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = dwin.reshape(n, oh, ow, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(dx.reshape(n, h, w, c))
