"""Geometric images on the d-torus and their operations.

A ``GeometricImage`` stores its pixels as one array of shape
``(N,)*d + (d,)*k``: the leading d axes index the pixel grid (axis 0 is the
x coordinate), the trailing k axes are the tensor components. Pixel-wise
tensor operations reuse the trailing-axis helpers of ``tensor_core``.

Convolution follows the cross-correlation indexing

    (A * C)(i) = sum_{a in [-m, m]^d} A(i - D a) (x) C(a + m)

with dilation D (D=1 is the undilated form), reading A on the torus. A
zero-padded boundary is available through ``boundary="zero"``.
"""
from functools import lru_cache
from itertools import product

import numpy as np

from geomnet import kernels
from geomnet import tensor_core as tc
from geomnet.symmetry import SymmetryError, flat_index, pixel_grid, pixel_permutation


class ImageError(ValueError):
    pass


class GeometricImage:
    __slots__ = ("data", "parity", "d")

    def __init__(self, data, parity=1, d=None):
        data = np.asarray(data, dtype=np.float64)
        if d is None:
            raise ImageError("d must be given explicitly")
        if data.ndim < d:
            raise ImageError(f"array of rank {data.ndim} cannot hold a {d}-d image")
        N = data.shape[0]
        if any(s != N for s in data.shape[:d]):
            raise ImageError(f"image must be square, got pixel shape {data.shape[:d]}")
        if any(s != d for s in data.shape[d:]):
            raise ImageError(f"pixel tensors must have shape (d,)*k, got {data.shape[d:]}")
        if parity not in (1, -1):
            raise ImageError(f"parity must be +1 or -1, got {parity!r}")
        self.data = data
        self.parity = int(parity)
        self.d = int(d)

    @classmethod
    def zeros(cls, N, d, k=0, parity=1):
        return cls(np.zeros((N,) * d + (d,) * k), parity, d)

    @classmethod
    def from_flat(cls, flat, N, d, k, parity=1):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != N**d * d**k:
            raise ImageError(f"expected {N**d * d**k} values, got {flat.size}")
        return cls(flat.reshape((N,) * d + (d,) * k), parity, d)

    @property
    def N(self):
        return self.data.shape[0]

    @property
    def k(self):
        return self.data.ndim - self.d

    @property
    def spec(self):
        return (self.N, self.d, self.k, self.parity)

    def pixels(self):
        """(N^d, d^k) view: one row of components per pixel, row-major."""
        return self.data.reshape(self.N**self.d, self.d**self.k)

    def flat(self):
        return self.data.ravel()

    def __getitem__(self, idx):
        return tc.GeometricTensor(self.data[tuple(idx)], self.parity, self.d)

    def allclose(self, other, rtol=1e-10, atol=1e-12):
        return self.spec == other.spec and np.allclose(self.data, other.data, rtol=rtol, atol=atol)

    def norm(self):
        return float(np.sqrt(np.sum(self.data**2)))

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, alpha):
        return scale(self, alpha)

    __rmul__ = __mul__

    def __repr__(self):
        return f"GeometricImage(N={self.N}, d={self.d}, k={self.k}, parity={self.parity:+d})"


def _same_grid(A, B):
    if A.N != B.N or A.d != B.d:
        raise ImageError(f"grid mismatch: (N={A.N}, d={A.d}) vs (N={B.N}, d={B.d})")


# ---------------------------------------------------------------------------
# pixel-wise arithmetic


def add(A, B):
    _same_grid(A, B)
    if (A.k, A.parity) != (B.k, B.parity):
        raise ImageError(f"cannot add {A!r} and {B!r}")
    return GeometricImage(A.data + B.data, A.parity, A.d)


def scale(A, alpha):
    return GeometricImage(A.data * float(alpha), A.parity, A.d)


def pixelwise_outer(A, B):
    _same_grid(A, B)
    return GeometricImage(tc.outer_axes(A.data, A.k, B.data, B.k), A.parity * B.parity, A.d)


def pixelwise_contract(A, mu, nu):
    if A.k < 2 or mu == nu:
        raise ImageError("contraction needs order >= 2 and two different indices")
    return GeometricImage(tc.multicontract_axes(A.data, A.k, [(mu, nu)]), A.parity, A.d)


def pixelwise_multicontract(A, pairs):
    return GeometricImage(tc.multicontract_axes(A.data, A.k, pairs), A.parity, A.d)


def pixelwise_lc_contract(A, mus):
    return GeometricImage(tc.levi_civita_contract_axes(A.data, A.k, A.d, mus), -A.parity, A.d)


def pixelwise_permute(A, sigma):
    return GeometricImage(np.ascontiguousarray(tc.permute_axes(A.data, A.k, sigma)), A.parity, A.d)


def constant_image(N, tensor):
    """Image with the same tensor in every pixel (e.g. delta or epsilon filters)."""
    d = tensor.d
    data = np.broadcast_to(tensor.data, (N,) * d + tensor.data.shape).copy()
    return GeometricImage(data, tensor.parity, d)


# ---------------------------------------------------------------------------
# convolution


def filter_offsets(M, d):
    """Tap offsets a in [-m, m]^d in lexicographic (row-major) order."""
    if M % 2 == 0:
        raise ImageError(f"filter sidelength must be odd, got M={M}")
    m = (M - 1) // 2
    return np.array(list(product(range(-m, m + 1), repeat=d)), dtype=np.int64).reshape(-1, d)


@lru_cache(maxsize=None)
def tap_table(N, d, M, dilation=1, boundary="torus"):
    """src[t, i]: flat pixel of A read by output pixel i at tap t (-1: padded zero)."""
    if dilation < 1:
        raise ImageError(f"dilation must be a positive integer, got {dilation}")
    if boundary not in ("torus", "zero"):
        raise ImageError(f"unknown boundary mode {boundary!r}")
    offsets = filter_offsets(M, d) * int(dilation)
    grid = pixel_grid(N, d)
    raw = grid[None, :, :] - offsets[:, None, :]
    if boundary == "torus":
        src = flat_index(np.mod(raw, N), N)
    else:
        inside = np.all((raw >= 0) & (raw < N), axis=-1)
        src = np.where(inside, flat_index(np.clip(raw, 0, N - 1), N), -1)
    src = np.ascontiguousarray(src, dtype=np.intp)
    src.setflags(write=False)
    return src


def convolve(A, C, dilation=1, boundary="torus"):
    """Geometric convolution: output order A.k + C.k, parity A.parity * C.parity."""
    if A.d != C.d:
        raise ImageError(f"dimension mismatch: image d={A.d}, filter d={C.d}")
    M = C.N
    if M % 2 == 0:
        raise ImageError(f"filter sidelength must be odd, got M={M}")
    src = tap_table(A.N, A.d, M, int(dilation), boundary)
    out = kernels.geo_conv(
        A.pixels()[None, None], C.pixels()[None], src[None]
    )
    k = A.k + C.k
    return GeometricImage(out.reshape((A.N,) * A.d + (A.d,) * k), A.parity * C.parity, A.d)


def fold_wrapped_taps(C, N):
    """Equivalent filter with every tap at offset +m folded onto -m.

    Only meaningful when M = N + 1 (so N = 2m): offsets +m and -m then read
    the same torus pixel, and moving the weight leaves A * C unchanged. The
    result is zero on every filter pixel with an index equal to N.
    """
    M, d = C.N, C.d
    if M != N + 1:
        raise ImageError(f"folding needs M = N + 1, got M={M}, N={N}")
    data = C.data.copy()
    for axis in range(d):
        lead = [slice(None)] * data.ndim
        last, first = list(lead), list(lead)
        last[axis], first[axis] = M - 1, 0
        data[tuple(first)] += data[tuple(last)]
        data[tuple(last)] = 0.0
    return GeometricImage(data, C.parity, d)


def convolve_reference(A, C, dilation=1):
    """Direct evaluation of the convolution sum, pixel by pixel (test oracle)."""
    N, d, M = A.N, A.d, C.N
    m = (M - 1) // 2
    out = np.zeros((N,) * d + (d,) * (A.k + C.k))
    for i in product(range(N), repeat=d):
        acc = np.zeros((d,) * (A.k + C.k))
        for a in product(range(-m, m + 1), repeat=d):
            src = tuple((i[q] - dilation * a[q]) % N for q in range(d))
            tap = tuple(a[q] + m for q in range(d))
            acc = acc + tc.outer_axes(A.data[src], A.k, C.data[tap], C.k)
        out[i] = acc
    return GeometricImage(out, A.parity * C.parity, d)


# ---------------------------------------------------------------------------
# group actions


def translate(A, tau):
    """(L_tau A)(i) = A(i - tau) on the torus."""
    tau = np.asarray(tau, dtype=np.int64).ravel()
    if tau.size != A.d:
        raise ImageError(f"translation has {tau.size} entries, expected {A.d}")
    return GeometricImage(np.roll(A.data, tuple(int(t) for t in tau), axis=tuple(range(A.d))), A.parity, A.d)


def act_image(g, A):
    """(g . A)(i) = g . A(g^-1 . i); needs odd N."""
    if g.d != A.d:
        raise ImageError(f"dimension mismatch: group d={g.d}, image d={A.d}")
    try:
        src = pixel_permutation(g, A.N)
    except SymmetryError as exc:
        raise ImageError(str(exc)) from exc
    moved = A.pixels()[src].reshape(A.data.shape)
    return GeometricImage(tc.act_axes(g.array, g.det, moved, A.k, A.parity), A.parity, A.d)


# ---------------------------------------------------------------------------
# pooling


def avg_pool(A, b):
    if b < 1 or A.N % b:
        raise ImageError(f"pool factor {b} does not divide N={A.N}")
    n, d = A.N // b, A.d
    shape = []
    for _ in range(d):
        shape += [n, b]
    arr = A.data.reshape(tuple(shape) + A.data.shape[d:])
    return GeometricImage(arr.mean(axis=tuple(range(1, 2 * d, 2))), A.parity, d)


def unpool(A, b):
    if b < 1:
        raise ImageError(f"unpool factor must be >= 1, got {b}")
    arr = A.data
    for axis in range(A.d):
        arr = np.repeat(arr, b, axis=axis)
    return GeometricImage(arr, A.parity, A.d)
