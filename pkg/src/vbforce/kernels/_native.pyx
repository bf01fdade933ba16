# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython hot loops for the convolution/pooling kernels (NHWC, float64).

Semantics match vbforce.kernels.reference exactly, including the
first-max tie rule of the pool argmax.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def im2col(double[:, :, :, ::1] x, int kh, int kw, int pad, int stride):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    out_arr = np.zeros((n * oh * ow, kh * kw * c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, ki, kj, ch, row, src_i, src_j, col
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    row = (b * oh + i) * ow + j
                    for ki in range(kh):
                        src_i = i * stride + ki - pad
                        if src_i < 0 or src_i >= h:
                            continue
                        for kj in range(kw):
                            src_j = j * stride + kj - pad
                            if src_j < 0 or src_j >= w:
                                continue
                            col = (ki * kw + kj) * c
                            for ch in range(c):
                                out[row, col + ch] = x[b, src_i, src_j, ch]
    return out_arr


def col2im(double[:, ::1] cols, shape, int kh, int kw, int pad, int stride):
    cdef Py_ssize_t n = shape[0], h = shape[1], w = shape[2], c = shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    out_arr = np.zeros((n, h, w, c), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, ki, kj, ch, row, src_i, src_j, col
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    row = (b * oh + i) * ow + j
                    for ki in range(kh):
                        src_i = i * stride + ki - pad
                        if src_i < 0 or src_i >= h:
                            continue
                        for kj in range(kw):
                            src_j = j * stride + kj - pad
                            if src_j < 0 or src_j >= w:
                                continue
                            col = (ki * kw + kj) * c
                            for ch in range(c):
                                out[b, src_i, src_j, ch] += cols[row, col + ch]
    return out_arr


def maxpool2x2(double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = h // 2, ow = w // 2
    out_arr = np.empty((n, oh, ow, c), dtype=np.float64)
    arg_arr = np.empty((n, oh, ow, c), dtype=np.uint8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, i, j, ch, di, dj
    cdef double best, v
    cdef unsigned char k, bestk
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    for ch in range(c):
                        best = x[b, 2 * i, 2 * j, ch]
                        bestk = 0
                        k = 1
                        for di in range(2):
                            for dj in range(2):
                                if di == 0 and dj == 0:
                                    continue
                                v = x[b, 2 * i + di, 2 * j + dj, ch]
                                if v > best:
                                    best = v
                                    bestk = k
                                k += 1
                        out[b, i, j, ch] = best
                        arg[b, i, j, ch] = bestk
    return out_arr, arg_arr


def maxpool2x2_backward(double[:, :, :, ::1] dout, unsigned char[:, :, :, ::1] arg, shape):
    cdef Py_ssize_t n = shape[0], h = shape[1], w = shape[2], c = shape[3]
    cdef Py_ssize_t oh = h // 2, ow = w // 2
    dx_arr = np.zeros((n, h, w, c), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t b, i, j, ch
    cdef unsigned char k
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    for ch in range(c):
                        k = arg[b, i, j, ch]
                        dx[b, 2 * i + (k >> 1), 2 * j + (k & 1), ch] = dout[b, i, j, ch]
    return dx_arr
