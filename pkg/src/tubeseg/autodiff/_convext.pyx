# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled 3x3 convolution kernels (zero padding 1, stride 1).

Mirrors the numpy fallback in ``_convnp``.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv3x3_forward(double[:, :, ::1] x, double[:, :, :, ::1] k):
    cdef Py_ssize_t c_in = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t c_out = k.shape[0]
    out_arr = np.zeros((c_out, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t o, i, y, xx, kh, kw, sy, sx
    cdef double acc
    with nogil:
        for o in range(c_out):
            for y in range(h):
                for xx in range(w):
                    acc = 0.0
                    for i in range(c_in):
                        for kh in range(3):
                            sy = y + kh - 1
                            if sy < 0 or sy >= h:
                                continue
                            for kw in range(3):
                                sx = xx + kw - 1
                                if sx < 0 or sx >= w:
                                    continue
                                acc += k[o, i, kh, kw] * x[i, sy, sx]
                    out[o, y, xx] = acc
    return out_arr


def conv3x3_grad_input(double[:, :, :, ::1] k, double[:, :, ::1] dout):
    cdef Py_ssize_t c_out = k.shape[0], c_in = k.shape[1]
    cdef Py_ssize_t h = dout.shape[1], w = dout.shape[2]
    dx_arr = np.zeros((c_in, h, w), dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t o, i, y, xx, kh, kw, sy, sx
    cdef double acc
    with nogil:
        for i in range(c_in):
            for y in range(h):
                for xx in range(w):
                    acc = 0.0
                    for o in range(c_out):
                        for kh in range(3):
                            # dout position that a (kh, kw) tap reads x[i,y,xx] from
                            sy = y - kh + 1
                            if sy < 0 or sy >= h:
                                continue
                            for kw in range(3):
                                sx = xx - kw + 1
                                if sx < 0 or sx >= w:
                                    continue
                                acc += k[o, i, kh, kw] * dout[o, sy, sx]
                    dx[i, y, xx] = acc
    return dx_arr


def conv3x3_grad_kernel(double[:, :, ::1] x, double[:, :, ::1] dout):
    cdef Py_ssize_t c_in = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t c_out = dout.shape[0]
    dk_arr = np.zeros((c_out, c_in, 3, 3), dtype=np.float64)
    cdef double[:, :, :, ::1] dk = dk_arr
    cdef Py_ssize_t o, i, y, xx, kh, kw, sy, sx
    cdef double acc
    with nogil:
        for o in range(c_out):
            for i in range(c_in):
                for kh in range(3):
                    for kw in range(3):
                        acc = 0.0
                        for y in range(h):
                            sy = y + kh - 1
                            if sy < 0 or sy >= h:
                                continue
                            for xx in range(w):
                                sx = xx + kw - 1
                                if sx < 0 or sx >= w:
                                    continue
                                acc += dout[o, y, xx] * x[i, sy, sx]
                        dk[o, i, kh, kw] = acc
    return dk_arr
