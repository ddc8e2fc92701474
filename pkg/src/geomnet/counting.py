"""Dimension of the space of degree-l equivariant maps on 2-d vector images.

Three routes to the same number, for maps A_{N,2,1,+} -> A_{N,2,1,+} that are
equivariant under G_{N,2} (torus translations combined with B_2):

* ``dimension_closed_form``: the closed binomial expression.
* ``dimension_molien``: the Molien sum over all 8 N^2 group elements, with
  every element treated as a signed permutation of the 2 N^2 basis vectors.
  Exact integer series, no floating point.
* ``count_empirical``: build candidate maps h(g_1(A) x ... x g_l(A)) from
  invariant filter banks, evaluate them on random probe images and take the
  rank of the stacked outputs.
"""
from dataclasses import asdict, dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from math import ceil, comb
import time

import numpy as np

from geomnet import numerics
from geomnet import tensor_core as tc
from geomnet.filter_bank import enumerate_invariant_filters
from geomnet.image_algebra import (
    convolve,
    pixelwise_multicontract,
    pixelwise_outer,
    tap_table,
)
from geomnet import kernels
from geomnet.symmetry import generate_bd, pixel_grid, flat_index, act_on_pixel

MOLIEN_MAX_N = 9
DEFAULT_PROBES = {1: 3, 2: 3, 3: 5}
PROBE_HEADROOM = 1.25
GROWTH_RTOL = 1e-7


class CountingError(ValueError):
    pass


def _check_problem(N, ell):
    if N < 1 or N % 2 == 0:
        raise CountingError(f"N must be a positive odd integer, got {N}")
    if ell < 0:
        raise CountingError(f"degree must be >= 0, got {ell}")


# ---------------------------------------------------------------------------
# closed form


def dimension_closed_form(N, ell):
    _check_problem(N, ell)
    n2 = N * N
    alt = sum((ell - 2 * j + 1) * comb(n2 + j - 2, j) for j in range(ell // 2 + 1))
    total = comb(2 * n2 + ell - 1, ell) + (-1) ** (ell + 1) * alt
    if total % 4:
        raise CountingError(f"closed form is not integral at N={N}, l={ell}")
    return total // 4


# ---------------------------------------------------------------------------
# Molien series


def basis_action(N, shift, h):
    """Signed permutation of the 2N^2 basis vectors e^q_i under i -> h.i + shift.

    Returns (dest, sign): basis vector b goes to sign[b] * e_{dest[b]}.
    Basis vectors are flattened pixel-major: b = flat(i) * 2 + q.
    """
    grid = pixel_grid(N, 2)
    moved = np.mod(act_on_pixel(h, grid, N) + np.asarray(shift), N)
    pix_dest = flat_index(moved, N)
    mat = h.array
    q_dest = np.argmax(np.abs(mat), axis=0)  # column q has its nonzero in row q_dest[q]
    q_sign = mat[q_dest, np.arange(2)]
    dest = (pix_dest[:, None] * 2 + q_dest[None, :]).ravel()
    sign = np.broadcast_to(q_sign, (N * N, 2)).ravel()
    return dest, sign


def cycle_type(dest, sign):
    """Multiset {(cycle length, product of signs along the cycle): count}."""
    n = len(dest)
    seen = np.zeros(n, dtype=bool)
    out = {}
    for start in range(n):
        if seen[start]:
            continue
        b, length, s = start, 0, 1
        while not seen[b]:
            seen[b] = True
            s *= int(sign[b])
            b = int(dest[b])
            length += 1
        out[(length, s)] = out.get((length, s), 0) + 1
    return out


def inverse_det_series(cycles, order):
    """1 / det(I - M t) for a signed permutation with the given cycle type."""
    series = numerics.IntegerSeries.one(order)
    for (length, s), count in sorted(cycles.items()):
        series = series * numerics.inverse_binomial_power(length, count, s, order)
    return series


def signed_trace(dest, sign):
    fixed = dest == np.arange(len(dest))
    return int(np.sum(sign[fixed]))


def molien_series(N, order, allow_large=False):
    """H(t) = (1/|G|) sum_g tr(g^-1) / det(I - g t), truncated after t^order."""
    _check_problem(N, order)
    if N > MOLIEN_MAX_N and not allow_large:
        raise CountingError(
            f"Molien sum at N={N} exceeds the size guard N <= {MOLIEN_MAX_N}; pass allow_large=True"
        )
    group = generate_bd(2)
    total = numerics.IntegerSeries([0], order)
    n_elements = 0
    for h in group:
        for shift in pixel_grid(N, 2):
            n_elements += 1
            dest, sign = basis_action(N, shift, h)
            # orthogonal representation: tr(g^-1) = tr(g)
            tr = signed_trace(dest, sign)
            if tr == 0:
                continue
            total = total + inverse_det_series(cycle_type(dest, sign), order) * tr
    return (total / n_elements).normalized()


def dimension_molien(N, ell, allow_large=False):
    value = molien_series(N, ell, allow_large).coefficient(ell)
    if isinstance(value, Fraction):
        raise CountingError(f"Molien coefficient {value} is not an integer")
    return value


# ---------------------------------------------------------------------------
# empirical counting


@dataclass(frozen=True)
class Candidate:
    """h(g_1(A) x ... x g_l(A)) with g_i = conv with a bank filter, h = conv then contraction.

    Filters are (k', index) pairs into the p'=+1 banks at M = N. ``pairs``
    contracts every index of the order-K tensor except ``free``.
    """

    g_filters: tuple
    h_filter: tuple
    free: int
    pairs: tuple


def perfect_matchings(indices):
    indices = list(indices)
    if not indices:
        yield ()
        return
    first = indices[0]
    for j in range(1, len(indices)):
        rest = indices[1:j] + indices[j + 1 :]
        for tail in perfect_matchings(rest):
            yield ((first, indices[j]),) + tail


def vector_contractions(K):
    """All ways to contract an order-K tensor (K odd) down to a vector."""
    out = []
    for free in range(K):
        others = [i for i in range(K) if i != free]
        for pairs in perfect_matchings(others):
            out.append((free, pairs))
    return out


def _banks(N):
    return {kp: enumerate_invariant_filters(N, 2, kp, 1) for kp in (1, 2)}


def candidate_blocks(N, ell, banks=None):
    """(g_filters, h_filter) blocks in deterministic order; each expands over contractions."""
    banks = banks or _banks(N)
    labels = [(kp, i) for kp in (1, 2) for i in range(len(banks[kp]))]
    if ell == 1:
        return [((), (2, i)) for i in range(len(banks[2]))]
    blocks = []
    for gs in combinations_with_replacement(labels, ell):
        k0 = sum(1 + kp for kp, _ in gs)
        for hp in (1, 2):
            if (k0 + hp) % 2 == 1:
                blocks.extend((gs, (hp, i)) for i in range(len(banks[hp])))
    return blocks


def _block_order(gs, h, ell):
    return (1 if ell == 1 else sum(1 + kp for kp, _ in gs)) + h[0]


def count_candidates(N, ell, banks=None):
    return sum(
        len(vector_contractions(_block_order(gs, h, ell))) for gs, h in candidate_blocks(N, ell, banks)
    )


def evaluate_candidate(cand, A, banks=None):
    """Evaluate one candidate map on one vector image via the image algebra."""
    banks = banks or _banks(A.N)
    if cand.g_filters:
        prod = None
        for kp, i in cand.g_filters:
            gi = convolve(A, banks[kp][i])
            prod = gi if prod is None else pixelwise_outer(prod, gi)
    else:
        prod = A
    kp, i = cand.h_filter
    out = convolve(prod, banks[kp][i])
    return pixelwise_multicontract(out, cand.pairs)


def _batched_conv(x, k, filt, N):
    """x: (S, P, 2^k) images; returns (S, P, 2^(k+kf)) convolved with filt."""
    src = tap_table(N, 2, filt.N, 1, "torus")
    out = kernels.geo_conv(x[:, None], filt.pixels()[None], src[None])
    return out[:, 0]


def _block_tensor(gs, h, probes, convs, banks, N):
    """Order-K block tensor for all probes, shape (S, P) + (2,)*K."""
    S, P = probes.shape[0], N * N
    if gs:
        prod = np.ones((S, P, 1))
        k = 0
        for lab in gs:
            g = convs[lab]
            prod = (prod[:, :, :, None] * g[:, :, None, :]).reshape(S, P, -1)
            k += 1 + lab[0]
    else:
        prod, k = probes, 1
    kp, i = h
    out = _batched_conv(prod, k, banks[kp][i], N)
    return out.reshape((S, P) + (2,) * (k + kp))


@dataclass
class EmpiricalCount:
    N: int
    degree: int
    seed: int
    found: int
    target: int
    probe_count: int
    candidates_enumerated: int
    candidates_total: int
    candidates_kept: int
    budget_exhausted: bool
    elapsed_s: float
    kept: list

    @property
    def complete(self):
        return self.found == self.target

    def report(self):
        out = asdict(self)
        out.pop("kept")
        out["complete"] = self.complete
        out["elapsed_s"] = round(self.elapsed_s, 3)
        return out


class _RankTracker:
    def __init__(self, width):
        self.basis = np.zeros((0, width))

    def offer(self, row):
        norm = np.linalg.norm(row)
        if norm == 0.0:
            return False
        v = row / norm
        for _ in range(2):
            v = v - self.basis.T @ (self.basis @ v)
        r = np.linalg.norm(v)
        if r <= GROWTH_RTOL:
            return False
        self.basis = np.vstack([self.basis, v / r])
        return True


def default_probe_count(N, ell):
    """Enough probes that the stacked output width comfortably exceeds the target rank."""
    need = ceil(PROBE_HEADROOM * dimension_closed_form(N, ell) / (2 * N * N))
    return max(DEFAULT_PROBES.get(ell, 5), need)


def count_empirical(
    N,
    ell,
    seed=0,
    probe_count=None,
    max_candidates=None,
    time_limit=None,
    max_per_block=None,
    stop_at_target=True,
):
    """Rank of the span of all candidate maps, evaluated on random probes.

    Blocks are visited in a fixed order for l <= 2 and in a seeded random
    order for higher degree, where the candidate count is large and the
    search is expected to hit its budget. With ``stop_at_target`` the search
    ends once the rank reaches the closed-form dimension, which it can never
    exceed; turn it off to sweep every candidate.
    """
    if ell not in (1, 2, 3):
        raise CountingError(f"empirical counting supports degrees 1..3, got {ell}")
    _check_problem(N, ell)
    start = time.perf_counter()
    target = dimension_closed_form(N, ell)
    probes_n = probe_count or default_probe_count(N, ell)
    rng = numerics.prng(seed, N, ell)
    probes = rng.standard_normal((probes_n, N * N, 2))
    banks = _banks(N)
    convs = {
        (kp, i): _batched_conv(probes, 1, f, N)
        for kp in (1, 2)
        for i, f in enumerate(banks[kp])
    }
    blocks = candidate_blocks(N, ell, banks)
    total = count_candidates(N, ell, banks)
    order_rng = numerics.prng(seed, N, ell, 1)
    if ell >= 3:
        blocks = [blocks[i] for i in order_rng.permutation(len(blocks))]

    tracker = _RankTracker(probes_n * N * N * 2)
    kept, kept_rows = [], []
    enumerated = 0
    exhausted = False
    for gs, h in blocks:
        if stop_at_target and len(kept) >= target:
            break
        T = _block_tensor(gs, h, probes, convs, banks, N)
        K = T.ndim - 2
        patterns = vector_contractions(K)
        if ell >= 3:
            patterns = [patterns[i] for i in order_rng.permutation(len(patterns))]
        if max_per_block is not None:
            patterns = patterns[:max_per_block]
        for free, pairs in patterns:
            if max_candidates is not None and enumerated >= max_candidates:
                exhausted = True
                break
            if time_limit is not None and time.perf_counter() - start > time_limit:
                exhausted = True
                break
            enumerated += 1
            row = tc.multicontract_axes(T, K, pairs).ravel()
            if tracker.offer(row):
                kept.append(Candidate(gs, h, free, pairs))
                kept_rows.append(row)
                if stop_at_target and len(kept) >= target:
                    break
        if exhausted:
            break
    found = numerics.rank(np.array(kept_rows)) if kept_rows else 0
    return EmpiricalCount(
        N=N,
        degree=ell,
        seed=seed,
        found=found,
        target=target,
        probe_count=probes_n,
        candidates_enumerated=enumerated,
        candidates_total=total,
        candidates_kept=len(kept),
        budget_exhausted=exhausted and found < target,
        elapsed_s=time.perf_counter() - start,
        kept=kept,
    )


def enumerate_candidates(N, ell, banks=None):
    """Every candidate in enumeration order (lazy)."""
    for gs, h in candidate_blocks(N, ell, banks):
        for free, pairs in vector_contractions(_block_order(gs, h, ell)):
            yield Candidate(gs, h, free, pairs)


def count_report(N, ell, mode="all", seed=0, **budget):
    """JSON-ready report for the requested counting routes."""
    rep = {"N": N, "degree": ell, "seed": seed, "mode": mode}
    if mode in ("closed", "all"):
        rep["closed_form"] = dimension_closed_form(N, ell)
    if mode in ("molien", "all"):
        rep["molien"] = dimension_molien(N, ell)
    if mode in ("empirical", "all"):
        if ell == 0:
            rep["empirical"] = 0
            rep["candidates_enumerated"] = 0
        else:
            res = count_empirical(N, ell, seed=seed, **budget)
            rep["empirical"] = res.found
            rep["candidates_enumerated"] = res.candidates_enumerated
            rep["empirical_detail"] = res.report()
    rep["partial"] = bool(rep.get("empirical_detail", {}).get("budget_exhausted"))
    exact = [rep[key] for key in ("closed_form", "molien") if key in rep]
    if "empirical" in rep and not rep["partial"]:
        exact.append(rep["empirical"])
    rep["consistent"] = len(set(exact)) <= 1
    if rep["partial"]:
        # a search stopped by its budget only gives a lower bound
        rep["consistent"] = rep["consistent"] and all(rep["empirical"] <= v for v in exact)
    return rep
