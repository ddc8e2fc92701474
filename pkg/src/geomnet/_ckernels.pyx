# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gather-convolution kernels.

All kernels take a precomputed tap table ``src[..., t, i]`` giving the flat
source pixel read by output pixel ``i`` at tap ``t`` (or -1 for a zero-padded
read). Taps are reduced in table order, which callers keep lexicographic.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def geo_conv(const double[:, :, :, ::1] img,
             const double[:, :, ::1] filt,
             const cnp.intp_t[:, :, ::1] src):
    """out[n, c, i, x*b + y] = sum_t img[n, c, src[c, t, i], x] * filt[c, t, y]"""
    cdef Py_ssize_t B = img.shape[0], C = img.shape[1], P = img.shape[2], a = img.shape[3]
    cdef Py_ssize_t T = filt.shape[1], b = filt.shape[2]
    cdef Py_ssize_t n, c, t, i, x, y, s, base
    cdef double v
    cdef bint live
    out_arr = np.zeros((B, C, P, a * b), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    for c in range(C):
        for t in range(T):
            live = False
            for y in range(b):
                if filt[c, t, y] != 0.0:
                    live = True
                    break
            if not live:
                continue
            for n in range(B):
                for i in range(P):
                    s = src[c, t, i]
                    if s < 0:
                        continue
                    for x in range(a):
                        v = img[n, c, s, x]
                        base = x * b
                        for y in range(b):
                            out[n, c, i, base + y] += v * filt[c, t, y]
    return out_arr


def geo_conv_adjoint(const double[:, :, :, ::1] gout,
                     const double[:, :, ::1] filt,
                     const cnp.intp_t[:, :, ::1] src,
                     Py_ssize_t a):
    """Adjoint of geo_conv with respect to the image argument."""
    cdef Py_ssize_t B = gout.shape[0], C = gout.shape[1], P = gout.shape[2]
    cdef Py_ssize_t T = filt.shape[1], b = filt.shape[2]
    cdef Py_ssize_t n, c, t, i, x, y, s, base
    cdef double acc
    cdef bint live
    gimg_arr = np.zeros((B, C, P, a), dtype=np.float64)
    cdef double[:, :, :, ::1] gimg = gimg_arr
    for c in range(C):
        for t in range(T):
            live = False
            for y in range(b):
                if filt[c, t, y] != 0.0:
                    live = True
                    break
            if not live:
                continue
            for n in range(B):
                for i in range(P):
                    s = src[c, t, i]
                    if s < 0:
                        continue
                    for x in range(a):
                        base = x * b
                        acc = 0.0
                        for y in range(b):
                            acc += gout[n, c, i, base + y] * filt[c, t, y]
                        gimg[n, c, s, x] += acc
    return gimg_arr


def chan_conv(const double[:, :, ::1] img,
              const double[:, :, ::1] w,
              const cnp.intp_t[:, ::1] src):
    """out[n, i, o] = sum_t sum_q img[n, src[t, i], q] * w[t, q, o]"""
    cdef Py_ssize_t B = img.shape[0], P = img.shape[1], Ci = img.shape[2]
    cdef Py_ssize_t T = w.shape[0], Co = w.shape[2]
    cdef Py_ssize_t n, t, i, q, o, s
    cdef double v
    out_arr = np.zeros((B, P, Co), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for n in range(B):
        for i in range(P):
            for t in range(T):
                s = src[t, i]
                if s < 0:
                    continue
                for q in range(Ci):
                    v = img[n, s, q]
                    for o in range(Co):
                        out[n, i, o] += v * w[t, q, o]
    return out_arr


def chan_conv_grads(const double[:, :, ::1] img,
                    const double[:, :, ::1] w,
                    const cnp.intp_t[:, ::1] src,
                    const double[:, :, ::1] gout):
    """Gradients of chan_conv with respect to the image and the weights."""
    cdef Py_ssize_t B = img.shape[0], P = img.shape[1], Ci = img.shape[2]
    cdef Py_ssize_t T = w.shape[0], Co = w.shape[2]
    cdef Py_ssize_t n, t, i, q, o, s
    cdef double v, acc
    gimg_arr = np.zeros((B, P, Ci), dtype=np.float64)
    gw_arr = np.zeros((T, Ci, Co), dtype=np.float64)
    cdef double[:, :, ::1] gimg = gimg_arr
    cdef double[:, :, ::1] gw = gw_arr
    for n in range(B):
        for i in range(P):
            for t in range(T):
                s = src[t, i]
                if s < 0:
                    continue
                for q in range(Ci):
                    v = img[n, s, q]
                    acc = 0.0
                    for o in range(Co):
                        acc += gout[n, i, o] * w[t, q, o]
                        gw[t, q, o] += v * gout[n, i, o]
                    gimg[n, s, q] += acc
    return gimg_arr, gw_arr
