"""Numerical kernels: SVD and rank, exact truncated power series, seeded RNG.

The RNG contract: every stream is a numpy ``Generator`` over the PCG64 bit
generator, seeded by a ``SeedSequence`` built from ``(seed, *key)``. PCG64 and
SeedSequence are specified bit-for-bit by numpy, so streams are identical
across platforms. Child streams are derived by appending integers to the key.
"""
from fractions import Fraction
from math import comb

import numpy as np

RANK_RTOL = 1e-8


class NumericsError(ValueError):
    pass


def svd(m):
    """Thin SVD ``m = u @ diag(s) @ vt`` with singular values descending."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise NumericsError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericsError("matrix has non-finite entries")
    if m.size == 0:
        r = min(m.shape)
        return np.zeros((m.shape[0], r)), np.zeros(r), np.zeros((r, m.shape[1]))
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u, s, vt


def rank(m, rtol=RANK_RTOL):
    """Number of singular values above ``rtol * s_max`` (0 for a zero matrix)."""
    _, s, _ = svd(m)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def row_space_basis(m, rtol=RANK_RTOL):
    """Orthonormal rows spanning the row space of m, plus the kept singular values."""
    _, s, vt = svd(m)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((0, np.asarray(m).shape[1])), s[:0]
    keep = s > rtol * s[0]
    return vt[keep], s[keep]


# ---------------------------------------------------------------------------
# exact truncated power series in t


class IntegerSeries:
    """Power series in t with exact coefficients, truncated after ``order``.

    Coefficients are Python ints or Fractions; arithmetic never rounds.
    """

    __slots__ = ("coeffs", "order")

    def __init__(self, coeffs, order):
        if order < 0:
            raise NumericsError("truncation order must be >= 0")
        coeffs = [_exact(c) for c in list(coeffs)[: order + 1]]
        coeffs += [0] * (order + 1 - len(coeffs))
        self.coeffs = coeffs
        self.order = order

    @classmethod
    def one(cls, order):
        return cls([1], order)

    @classmethod
    def monomial(cls, power, coeff, order):
        c = [0] * (order + 1)
        if power <= order:
            c[power] = coeff
        return cls(c, order)

    def coefficient(self, ell):
        if ell < 0:
            return 0
        if ell > self.order:
            raise NumericsError(f"coefficient {ell} is beyond truncation order {self.order}")
        return self.coeffs[ell]

    def _check(self, other):
        if not isinstance(other, IntegerSeries):
            return IntegerSeries([other], self.order)
        if other.order != self.order:
            raise NumericsError("series truncated at different orders")
        return other

    def __add__(self, other):
        other = self._check(other)
        return IntegerSeries([a + b for a, b in zip(self.coeffs, other.coeffs)], self.order)

    __radd__ = __add__

    def __neg__(self):
        return IntegerSeries([-a for a in self.coeffs], self.order)

    def __sub__(self, other):
        return self + (-self._check(other))

    def __mul__(self, other):
        if not isinstance(other, IntegerSeries):
            return IntegerSeries([a * _exact(other) for a in self.coeffs], self.order)
        other = self._check(other)
        n = self.order + 1
        out = [0] * n
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j in range(n - i):
                b = other.coeffs[j]
                if b:
                    out[i + j] += a * b
        return IntegerSeries(out, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, IntegerSeries):
            return self * other.reciprocal()
        return IntegerSeries([Fraction(a) / _exact(other) for a in self.coeffs], self.order)

    def reciprocal(self):
        c0 = self.coeffs[0]
        if c0 == 0:
            raise NumericsError("series with zero constant term has no reciprocal")
        inv = [Fraction(1) / c0 if not (isinstance(c0, int) and c0 in (1, -1)) else c0]
        for n in range(1, self.order + 1):
            acc = 0
            for j in range(1, n + 1):
                acc += self.coeffs[j] * inv[n - j]
            inv.append(-acc * inv[0])
        return IntegerSeries(inv, self.order)

    def __eq__(self, other):
        if not isinstance(other, IntegerSeries):
            return NotImplemented
        return self.order == other.order and self.coeffs == other.coeffs

    def __repr__(self):
        return f"IntegerSeries({self.coeffs!r}, order={self.order})"

    def normalized(self):
        """Coefficients with integral Fractions turned back into ints."""
        out = []
        for c in self.coeffs:
            if isinstance(c, Fraction) and c.denominator == 1:
                c = c.numerator
            out.append(c)
        return IntegerSeries(out, self.order)


def _exact(c):
    if isinstance(c, (int, Fraction)):
        return c
    if isinstance(c, (np.integer,)):
        return int(c)
    raise NumericsError(f"inexact coefficient {c!r}")


def inverse_binomial_power(a, b, sign, order):
    """Series of 1 / (1 - sign * t**a)**b, exactly.

    1/(1 - s t^a)^b = sum_j C(b+j-1, j) s^j t^(a j).
    """
    if a < 1 or b < 0 or sign not in (1, -1):
        raise NumericsError("need a >= 1, b >= 0 and sign in {+1, -1}")
    c = [0] * (order + 1)
    j = 0
    while a * j <= order:
        c[a * j] = comb(b + j - 1, j) * sign**j if b > 0 else (1 if j == 0 else 0)
        j += 1
    return IntegerSeries(c, order)


# ---------------------------------------------------------------------------
# deterministic RNG


def prng(seed, *key):
    """Seeded numpy Generator; ``key`` integers select an independent sub-stream."""
    if seed < 0 or any(k < 0 for k in key):
        raise NumericsError("seed and key entries must be non-negative integers")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, key)])))


def draw_u64(gen, n):
    """n raw 64-bit draws from a generator."""
    return gen.integers(0, 2**64, size=n, dtype=np.uint64)
