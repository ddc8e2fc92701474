"""Dense k(p)-tensors in d dimensions.

A ``GeometricTensor`` holds ``d**k`` real components (stored with shape
``(d,) * k``) and a parity in {+1, -1}. Index positions are zero-based
throughout: index position ``mu`` here is position ``mu + 1`` in the usual
one-based tensor notation.

The array-level helpers (``multicontract_axes``, ``act_axes``, ...) operate on
the *trailing* k axes of an array, so the same code serves single tensors,
images (leading pixel axes) and batches.
"""
from functools import lru_cache
from itertools import permutations
import string

import numpy as np


class TensorError(ValueError):
    pass


class GeometricTensor:
    __slots__ = ("d", "parity", "data")

    def __init__(self, data, parity=1, d=None):
        data = np.asarray(data, dtype=np.float64)
        if d is None:
            if data.ndim == 0:
                raise TensorError("d must be given for an order-0 tensor")
            d = data.shape[0]
        if d < 1:
            raise TensorError("dimension d must be >= 1")
        if any(s != d for s in data.shape):
            raise TensorError(f"components of shape {data.shape} are not (d,)*k with d={d}")
        if parity not in (1, -1):
            raise TensorError(f"parity must be +1 or -1, got {parity!r}")
        self.d = int(d)
        self.parity = int(parity)
        self.data = data

    @classmethod
    def from_components(cls, components, d, k, parity=1):
        components = np.asarray(components, dtype=np.float64).ravel()
        if components.size != d**k:
            raise TensorError(f"expected {d**k} components, got {components.size}")
        return cls(components.reshape((d,) * k), parity, d)

    @classmethod
    def zeros(cls, d, k, parity=1):
        return cls(np.zeros((d,) * k), parity, d)

    @property
    def k(self):
        return self.data.ndim

    @property
    def components(self):
        return self.data.ravel()

    def __repr__(self):
        return f"GeometricTensor(d={self.d}, k={self.k}, parity={self.parity:+d}, components={self.components.tolist()})"

    def allclose(self, other, atol=1e-12, rtol=0.0):
        return (
            (self.d, self.k, self.parity) == (other.d, other.k, other.parity)
            and np.allclose(self.data, other.data, atol=atol, rtol=rtol)
        )

    __add__ = lambda self, other: add(self, other)
    __sub__ = lambda self, other: add(self, scale(other, -1.0))
    __mul__ = lambda self, alpha: scale(self, alpha)
    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# special tensors


def kronecker_delta(d):
    if d < 1:
        raise TensorError("d must be >= 1")
    return GeometricTensor(np.eye(d), 1, d)


@lru_cache(maxsize=None)
def _levi_civita_array(d):
    eps = np.zeros((d,) * d)
    for perm in permutations(range(d)):
        eps[perm] = permutation_sign(perm)
    eps.setflags(write=False)
    return eps


def permutation_sign(perm):
    perm = list(perm)
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def levi_civita(d):
    if d < 2:
        raise TensorError("the Levi-Civita symbol needs d >= 2")
    return GeometricTensor(_levi_civita_array(d).copy(), -1, d)


# ---------------------------------------------------------------------------
# array-level operations on trailing axes

_LETTERS = string.ascii_letters


def _check_pairs(pairs, k):
    flat = [i for pair in pairs for i in pair]
    for pair in pairs:
        if len(pair) != 2:
            raise TensorError(f"contraction pair {pair!r} does not have two entries")
    if any(not (0 <= int(i) < k) for i in flat):
        raise TensorError(f"contraction indices {pairs!r} out of range for order {k}")
    if len(set(flat)) != len(flat):
        raise TensorError(f"contraction indices {pairs!r} are not distinct")


def multicontract_axes(arr, k, pairs):
    """Contract index pairs of the trailing k axes; pairs use pre-contraction labels."""
    pairs = [tuple(int(i) for i in p) for p in pairs]
    _check_pairs(pairs, k)
    if not pairs:
        return np.asarray(arr)
    letters = list(_LETTERS[:k])
    for mu, nu in pairs:
        letters[nu] = letters[mu]
    gone = {i for p in pairs for i in p}
    out = "".join(letters[i] for i in range(k) if i not in gone)
    return np.einsum(f"...{''.join(letters)}->...{out}", arr)


def outer_axes(a, ka, b, kb):
    """Outer product of the trailing ka axes of a with the trailing kb axes of b.

    Leading axes broadcast.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    a_exp = a.reshape(a.shape + (1,) * kb)
    b_exp = b.reshape(b.shape[: b.ndim - kb] + (1,) * ka + b.shape[b.ndim - kb :])
    return a_exp * b_exp


def levi_civita_contract_axes(arr, k, d, mus):
    mus = [int(m) for m in mus]
    if len(mus) != d - 1:
        raise TensorError(f"Levi-Civita contraction in d={d} needs {d - 1} indices, got {len(mus)}")
    if k < d - 1:
        raise TensorError(f"order {k} is too small for a Levi-Civita contraction in d={d}")
    if len(set(mus)) != len(mus) or any(not (0 <= m < k) for m in mus):
        raise TensorError(f"Levi-Civita indices {mus!r} must be distinct and in [0, {k})")
    full = outer_axes(arr, k, _levi_civita_array(d), d)
    return multicontract_axes(full, k + d, [(m, k + i) for i, m in enumerate(mus)])


def permute_axes(arr, k, sigma):
    """Index permutation: result[i_0..i_{k-1}] = arr[i_{sigma^-1(0)}, ..., i_{sigma^-1(k-1)}]."""
    sigma = [int(s) for s in sigma]
    if sorted(sigma) != list(range(k)):
        raise TensorError(f"{sigma!r} is not a permutation of {k} slots")
    lead = np.asarray(arr).ndim - k
    return np.transpose(arr, list(range(lead)) + [lead + s for s in sigma])


def act_axes(matrix, det, arr, k, parity):
    """Apply an orthogonal matrix to each of the trailing k axes, with pseudo-sign."""
    out = np.asarray(arr, dtype=np.float64)
    matrix = np.asarray(matrix, dtype=np.float64)
    nd = out.ndim
    for axis in range(nd - k, nd):
        out = np.moveaxis(np.tensordot(out, matrix, axes=([axis], [1])), -1, axis)
    if parity == -1 and det == -1:
        out = -out
    return out


@lru_cache(maxsize=None)
def contraction_matrix(d, k, pairs):
    """Matrix of the multicontraction on flattened components: (d^(k-2r), d^k)."""
    eye = np.eye(d**k).reshape((d**k,) + (d,) * k)
    out = multicontract_axes(eye, k, [tuple(p) for p in pairs])
    mat = np.ascontiguousarray(out.reshape(d**k, -1).T)
    mat.setflags(write=False)
    return mat


# ---------------------------------------------------------------------------
# tensor-level operations


def _same_d(a, b):
    if a.d != b.d:
        raise TensorError(f"dimension mismatch: {a.d} vs {b.d}")


def outer(a, b):
    _same_d(a, b)
    return GeometricTensor(outer_axes(a.data, a.k, b.data, b.k), a.parity * b.parity, a.d)


def contract(a, mu, nu):
    if a.k < 2:
        raise TensorError("contraction needs order >= 2")
    if mu == nu:
        raise TensorError("contraction indices must differ")
    return GeometricTensor(multicontract_axes(a.data, a.k, [(mu, nu)]), a.parity, a.d)


def multicontract(a, pairs):
    return GeometricTensor(multicontract_axes(a.data, a.k, pairs), a.parity, a.d)


def levi_civita_contract(a, mus):
    return GeometricTensor(levi_civita_contract_axes(a.data, a.k, a.d, mus), -a.parity, a.d)


def permute_indices(a, sigma):
    return GeometricTensor(np.ascontiguousarray(permute_axes(a.data, a.k, sigma)), a.parity, a.d)


def act(g, a):
    """Group action of an orthogonal group element on a k(p)-tensor."""
    if g.d != a.d:
        raise TensorError(f"dimension mismatch: group d={g.d}, tensor d={a.d}")
    return GeometricTensor(act_axes(g.array, g.det, a.data, a.k, a.parity), a.parity, a.d)


def add(a, b):
    if (a.d, a.k, a.parity) != (b.d, b.k, b.parity):
        raise TensorError(
            f"cannot add ({a.d},{a.k},{a.parity:+d}) and ({b.d},{b.k},{b.parity:+d}) tensors"
        )
    return GeometricTensor(a.data + b.data, a.parity, a.d)


def scale(a, alpha):
    return GeometricTensor(a.data * float(alpha), a.parity, a.d)


def frobenius_norm(a):
    return float(np.sqrt(np.sum(a.data**2)))
