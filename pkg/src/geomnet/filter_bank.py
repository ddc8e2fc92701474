"""B_d-invariant convolution filters.

The invariant subspace of k(p) filters with sidelength M is the image of the
group-averaging projector P = (1/|B_d|) sum_g R_g, where R_g is the action of
g on flattened filters. Its dimension comes from an SVD of P; a canonical
orthogonal basis is then read off by Gram-Schmidt over the averaged one-hot
filters (the columns of P) in flat-index order. Every basis filter is passed
through ``normalize_filter`` and the bank is sorted lexicographically on the
normalized components, so the output does not depend on the SVD's choice of
basis inside the (degenerate) unit singular space.
"""
from dataclasses import dataclass, field
from functools import lru_cache, reduce

import numpy as np

from geomnet import numerics
from geomnet import tensor_core as tc
from geomnet.image_algebra import (
    GeometricImage,
    act_image,
    constant_image,
    pixelwise_lc_contract,
    pixelwise_outer,
)
from geomnet.symmetry import generate_bd, pixel_permutation

INVARIANCE_ATOL = 1e-12
_GS_TOL = 1e-9
_SIGN_TOL = 1e-10


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class FilterBank:
    M: int
    d: int
    k: int
    parity: int
    filters: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.filters)

    def __iter__(self):
        return iter(self.filters)

    def __getitem__(self, i):
        return self.filters[i]

    def matrix(self):
        """Filters flattened into rows, shape (len, M^d * d^k)."""
        n = self.M**self.d * self.d**self.k
        if not self.filters:
            return np.zeros((0, n))
        return np.stack([f.flat() for f in self.filters])


def action_matrix(g, M, k, parity):
    """R_g acting on flattened k(p) filters of sidelength M: vec(g.C) = R_g vec(C)."""
    d = g.d
    src = pixel_permutation(g, M)
    npix = M**d
    perm = np.zeros((npix, npix))
    perm[np.arange(npix), src] = 1.0
    comp = reduce(np.kron, [g.array.astype(np.float64)] * k, np.eye(1))
    if parity == -1 and g.det == -1:
        comp = -comp
    return np.kron(perm, comp)


@lru_cache(maxsize=None)
def averaging_projector(M, d, k, parity):
    if M % 2 == 0:
        raise FilterError(f"filter sidelength must be odd, got M={M}")
    if d < 1 or k < 0 or parity not in (1, -1):
        raise FilterError(f"invalid filter spec d={d}, k={k}, parity={parity}")
    group = generate_bd(d)
    proj = sum(action_matrix(g, M, k, parity) for g in group) / len(group)
    proj.setflags(write=False)
    return proj


def _first_nonzero_sign(flat):
    nz = np.flatnonzero(np.abs(flat) > _SIGN_TOL)
    return 1.0 if nz.size == 0 else float(np.sign(flat[nz[0]]))


def divergence(C):
    """Discrete divergence sum_a <a, C(a + m)> of a vector filter."""
    m = (C.N - 1) // 2
    total = 0.0
    for q in range(C.d):
        offs = np.arange(C.N) - m
        shape = [1] * C.d
        shape[q] = C.N
        total += float(np.sum(offs.reshape(shape) * C.data[..., q]))
    return total


def curl(C):
    """Discrete curl sum_a (a_x C_y - a_y C_x) of a 2-d vector filter."""
    m = (C.N - 1) // 2
    ax = (np.arange(C.N) - m)[:, None]
    ay = (np.arange(C.N) - m)[None, :]
    return float(np.sum(ax * C.data[..., 1] - ay * C.data[..., 0]))


def normalize_filter(C):
    """Scale to max |component| = 1 and fix the sign.

    Vector filters get a positive divergence, or failing that (d=2) a positive
    (counterclockwise) curl. Everything else gets a positive first nonzero
    component in flat order.
    """
    peak = float(np.max(np.abs(C.data))) if C.data.size else 0.0
    if peak == 0.0:
        raise FilterError("cannot normalize the zero filter")
    out = C.data / peak
    sign = 0.0
    if C.k == 1:
        probe = GeometricImage(out, C.parity, C.d)
        div = divergence(probe)
        if abs(div) > _SIGN_TOL:
            sign = np.sign(div)
        elif C.d == 2:
            rot = curl(probe)
            if abs(rot) > _SIGN_TOL:
                sign = np.sign(rot)
    if sign == 0.0:
        sign = _first_nonzero_sign(out.ravel())
    return GeometricImage(out * sign + 0.0, C.parity, C.d)


def _canonical_basis(proj, dim):
    basis = []
    for col in proj.T:
        v = col.copy()
        for _ in range(2):
            for b in basis:
                v -= (b @ v) * b
        norm = np.linalg.norm(v)
        if norm > _GS_TOL:
            basis.append(v / norm)
            if len(basis) == dim:
                break
    if len(basis) != dim:
        raise FilterError(f"Gram-Schmidt found {len(basis)} filters, SVD rank is {dim}")
    return basis


def _sort_key(img):
    return tuple(np.round(img.flat(), 9).tolist())


@lru_cache(maxsize=None)
def enumerate_invariant_filters(M, d, k, parity):
    """Orthogonal basis of all B_d-invariant k(parity) filters of sidelength M."""
    proj = averaging_projector(M, d, k, parity)
    dim = numerics.rank(proj) if np.any(proj) else 0
    shape = (M,) * d + (d,) * k
    filters = []
    for v in _canonical_basis(proj, dim):
        v = proj @ v  # re-project to wash out Gram-Schmidt rounding
        img = normalize_filter(GeometricImage(v.reshape(shape), parity, d))
        img.data.setflags(write=False)
        filters.append(img)
    filters.sort(key=_sort_key, reverse=True)
    return FilterBank(M, d, k, parity, tuple(filters))


def invariant_dimension(M, d, k, parity):
    return len(enumerate_invariant_filters(M, d, k, parity))


def is_invariant(C, atol=INVARIANCE_ATOL):
    return all(np.allclose(act_image(g, C).data, C.data, rtol=0.0, atol=atol) for g in generate_bd(C.d))


def pair_by_kron(C):
    """C (x) delta in every pixel: invariant, order k+2, same parity."""
    return pixelwise_outer(C, constant_image(C.N, tc.kronecker_delta(C.d)))


def pair_by_levi_civita(C, mus):
    """Pixelwise Levi-Civita contraction: invariant, order k-d+2, opposite parity."""
    try:
        return pixelwise_lc_contract(C, mus)
    except tc.TensorError as exc:
        raise FilterError(str(exc)) from exc

