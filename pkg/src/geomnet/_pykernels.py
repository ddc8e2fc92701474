"""Pure-numpy versions of the gather-convolution kernels.

Same signatures and semantics as the compiled ``_ckernels`` module. Padded
reads (``src == -1``) hit an appended zero pixel.
"""
import numpy as np


def _pad_pixel(arr, axis):
    shape = list(arr.shape)
    shape[axis] = 1
    return np.concatenate([arr, np.zeros(shape)], axis=axis)


def _remap(src, P):
    return np.where(src < 0, P, src)


def geo_conv(img, filt, src):
    B, C, P, a = img.shape
    T, b = filt.shape[1], filt.shape[2]
    padded = _pad_pixel(img, 2)
    src = _remap(src, P)
    chans = np.arange(C)[:, None]
    out = np.zeros((B, C, P, a, b))
    for t in range(T):
        tap = filt[:, t, :]
        if not tap.any():
            continue
        gathered = padded[:, chans, src[:, t, :], :]  # (B, C, P, a)
        out += gathered[..., :, None] * tap[None, :, None, None, :]
    return out.reshape(B, C, P, a * b)


def geo_conv_adjoint(gout, filt, src, a):
    B, C, P, _ = gout.shape
    T, b = filt.shape[1], filt.shape[2]
    g = gout.reshape(B, C, P, a, b)
    src = _remap(src, P)
    gimg = np.zeros((B, C, P + 1, a))
    for c in range(C):
        for t in range(T):
            tap = filt[c, t]
            if not tap.any():
                continue
            contrib = g[:, c] @ tap  # (B, P, a)
            np.add.at(gimg[:, c], (slice(None), src[c, t]), contrib)
    return gimg[:, :, :P]


def chan_conv(img, w, src):
    B, P, _ = img.shape
    padded = _pad_pixel(img, 1)
    src = _remap(src, P)
    out = np.zeros((B, P, w.shape[2]))
    for t in range(w.shape[0]):
        out += padded[:, src[t], :] @ w[t]
    return out


def chan_conv_grads(img, w, src, gout):
    B, P, Ci = img.shape
    padded = _pad_pixel(img, 1)
    src = _remap(src, P)
    gimg = np.zeros((B, P + 1, Ci))
    gw = np.zeros_like(w)
    for t in range(w.shape[0]):
        gathered = padded[:, src[t], :]
        gw[t] = np.einsum("npq,npo->qo", gathered, gout)
        np.add.at(gimg, (slice(None), src[t]), gout @ w[t].T)
    return gimg[:, :P], gw
