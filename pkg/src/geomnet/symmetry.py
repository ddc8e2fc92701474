"""The hyperoctahedral group B_d as signed permutation matrices.

Rotations by 90 degrees use the counterclockwise convention: in the (x_i, x_j)
coordinate plane the generator sends e_i to e_j, i.e. for d=2 its matrix is
[[0, -1], [1, 0]] with index 0 the x axis.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from geomnet.tensor_core import permutation_sign


class SymmetryError(ValueError):
    pass


@dataclass(frozen=True)
class GroupElement:
    matrix: tuple  # d x d nested tuple of ints

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.int64)
        d = m.shape[0]
        if m.shape != (d, d):
            raise SymmetryError("group element matrix must be square")
        if not (
            np.all(np.count_nonzero(m, axis=0) == 1)
            and np.all(np.count_nonzero(m, axis=1) == 1)
            and np.all(np.isin(m, (-1, 0, 1)))
        ):
            raise SymmetryError(f"{self.matrix!r} is not a signed permutation matrix")

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr)
        return cls(tuple(tuple(int(v) for v in row) for row in arr))

    @classmethod
    def identity(cls, d):
        return cls.from_array(np.eye(d, dtype=np.int64))

    @property
    def d(self):
        return len(self.matrix)

    @property
    def array(self):
        return np.array(self.matrix, dtype=np.int64)

    @property
    def det(self):
        m = self.array
        perm = np.argmax(np.abs(m), axis=1)
        signs = m[np.arange(self.d), perm]
        return int(permutation_sign(perm) * np.prod(signs))

    def is_identity(self):
        return np.array_equal(self.array, np.eye(self.d, dtype=np.int64))

    def __matmul__(self, other):
        return compose(self, other)

    def __repr__(self):
        return f"GroupElement({self.array.tolist()})"


def compose(g, h):
    """The element acting as h first, then g (matrix product g @ h)."""
    if g.d != h.d:
        raise SymmetryError(f"dimension mismatch: {g.d} vs {h.d}")
    return GroupElement.from_array(g.array @ h.array)


def inverse(g):
    return GroupElement.from_array(g.array.T)


def generators(d):
    """One 90-degree rotation per coordinate plane plus the reflection x_0 -> -x_0."""
    if d < 1:
        raise SymmetryError("d must be >= 1")
    gens = []
    for i in range(d):
        for j in range(i + 1, d):
            r = np.eye(d, dtype=np.int64)
            r[i, i] = r[j, j] = 0
            r[i, j] = -1
            r[j, i] = 1
            gens.append(GroupElement.from_array(r))
    refl = np.eye(d, dtype=np.int64)
    refl[0, 0] = -1
    gens.append(GroupElement.from_array(refl))
    return gens


class Group:
    """A finite matrix group closed under products, in canonical order."""

    def __init__(self, d, elements):
        self.d = d
        self.elements = sorted(set(elements), key=lambda g: tuple(v for row in g.matrix for v in row))
        self._index = {g: i for i, g in enumerate(self.elements)}

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def __contains__(self, g):
        return g in self._index

    def index(self, g):
        return self._index[g]

    @property
    def identity(self):
        return GroupElement.identity(self.d)


@lru_cache(maxsize=None)
def generate_bd(d):
    """Close the generators of B_d under products."""
    gens = generators(d)
    ident = GroupElement.identity(d)
    found = {ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for g in frontier:
            for s in gens:
                h = compose(s, g)
                if h not in found:
                    found.add(h)
                    nxt.append(h)
        frontier = nxt
    return Group(d, found)


def rotation_90(d=2, plane=(0, 1)):
    i, j = plane
    r = np.eye(d, dtype=np.int64)
    r[i, i] = r[j, j] = 0
    r[i, j] = -1
    r[j, i] = 1
    return GroupElement.from_array(r)


# ---------------------------------------------------------------------------
# action on pixel indices


def _require_odd(N):
    if N % 2 == 0:
        raise SymmetryError(
            f"B_d acts on pixel grids of odd sidelength only (N={N}); the center must be a pixel"
        )


def act_on_pixel(g, idx, N):
    """g . i = M(g)(i - c) + c with c the center pixel, reduced mod N."""
    _require_odd(N)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape[-1] != g.d:
        raise SymmetryError(f"pixel index has {idx.shape[-1]} coordinates, expected {g.d}")
    if np.any((idx < 0) | (idx >= N)):
        raise SymmetryError(f"pixel index {idx.tolist()} outside [0, {N})")
    c = (N - 1) // 2
    out = (idx - c) @ g.array.T + c
    return np.mod(out, N)


def pixel_grid(N, d):
    """All pixel indices of an N^d grid in row-major order, shape (N^d, d)."""
    axes = np.meshgrid(*[np.arange(N)] * d, indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=-1)


def flat_index(idx, N):
    idx = np.asarray(idx, dtype=np.int64)
    d = idx.shape[-1]
    weights = N ** np.arange(d - 1, -1, -1)
    return idx @ weights


@lru_cache(maxsize=None)
def pixel_permutation(g, N):
    """Flat source pixel for each flat output pixel of (g . A): src[i] = flat(g^-1 . i)."""
    grid = pixel_grid(N, g.d)
    src = flat_index(act_on_pixel(inverse(g), grid, N), N)
    src.setflags(write=False)
    return src
