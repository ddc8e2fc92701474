"""Hot convolution kernels, compiled when available.

The Cython extension ``geomnet._ckernels`` is used if it was built; otherwise
the numpy implementation in ``geomnet._pykernels`` is used. Setting the
environment variable ``GEOMNET_PURE_PYTHON=1`` forces the numpy path.

Both backends agree to floating-point rounding; each is deterministic on its
own (taps are always reduced in lexicographic order).
"""
import os

import numpy as np

from geomnet import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("GEOMNET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from geomnet import _ckernels
    except ImportError:
        pass
    else:
        _impl = _ckernels
        BACKEND = "cython"


def _f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def _idx(x):
    return np.ascontiguousarray(x, dtype=np.intp)


def geo_conv(img, filt, src, impl=None):
    """Per-channel geometric convolution.

    img: (B, C, P, a) images, filt: (C, T, b) filter taps, src: (C, T, P) tap
    table. Returns (B, C, P, a*b), the pixelwise outer product summed over taps.
    """
    impl = impl or _impl
    return impl.geo_conv(_f64(img), _f64(filt), _idx(src))


def geo_conv_adjoint(gout, filt, src, a, impl=None):
    impl = impl or _impl
    return impl.geo_conv_adjoint(_f64(gout), _f64(filt), _idx(src), int(a))


def chan_conv(img, w, src, impl=None):
    """Multi-channel scalar convolution with learned taps w: (T, Cin, Cout).

    Defaults to the numpy kernel on both backends: it is one BLAS matmul per
    tap and beats the compiled loop (see benchmarks/bench_kernels.py).
    """
    impl = impl or _pykernels
    return impl.chan_conv(_f64(img), _f64(w), _idx(src))


def chan_conv_grads(img, w, src, gout, impl=None):
    impl = impl or _impl
    return impl.chan_conv_grads(_f64(img), _f64(w), _idx(src), _f64(gout))


def backends():
    """Available backend modules keyed by name."""
    out = {"python": _pykernels}
    try:
        from geomnet import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
