"""GI-Net layers acting on image stacks grouped by (order, parity).

A stack maps each key ``(k, p)`` to an autodiff node holding an array of
shape ``(B, n, P, d**k)``: batch, images in the group, flat pixels, flat
components. Layers are built in two passes. ``edges`` reports which input
groups feed which output groups so the net can drop groups nothing
downstream consumes; ``bind`` then fixes image counts and parameter slices
for the surviving groups.
"""
from functools import lru_cache
from itertools import combinations, combinations_with_replacement

import numpy as np

from geomnet import tensor_core as tc
from geomnet.filter_bank import enumerate_invariant_filters
from geomnet.ginet import autodiff as ad
from geomnet.image_algebra import tap_table


class NetError(ValueError):
    pass


def _matchings(indices):
    if not indices:
        yield ()
        return
    first = indices[0]
    for j in range(1, len(indices)):
        rest = indices[1:j] + indices[j + 1 :]
        for tail in _matchings(rest):
            yield ((first, indices[j]),) + tail


@lru_cache(maxsize=None)
def pair_sets(k, r):
    """Every unordered set of r disjoint index pairs among k indices."""
    if r < 0 or 2 * r > k:
        return ()
    out = []
    for chosen in combinations(range(k), 2 * r):
        out.extend(_matchings(list(chosen)))
    return tuple(out)


def capped_order(k, max_order):
    """Order after contracting down to the cap, keeping k's parity."""
    if max_order is None or k <= max_order:
        return k
    return max_order if (k - max_order) % 2 == 0 else max_order - 1


def contract_node(tape, node, d, k, target):
    """All unique contractions of order-k images down to order target, concatenated."""
    if k == target:
        return node
    r = (k - target) // 2
    outs = [ad.linear_components(tape, node, tc.contraction_matrix(d, k, pairs)) for pairs in pair_sets(k, r)]
    return ad.concat(tape, outs, axis=1)


def contraction_multiplicity(k, target):
    return len(pair_sets(k, (k - target) // 2)) if k >= target and (k - target) % 2 == 0 else 0


class Layer:
    n_params = 0
    offset = 0

    def edges(self, in_keys):
        raise NotImplementedError

    def bind(self, in_groups, live_out, offset):
        """Fix shapes for the live outputs; returns the output group counts."""
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError


class ConvLayer(Layer):
    """Per (input group, filter, dilation): weighted sum of the group, then convolution."""

    def __init__(self, filters, dilations, M, d, max_order, boundary="torus"):
        self.filters = [tuple(int(v) for v in f) for f in filters]
        self.dilations = [int(v) for v in dilations]
        if not self.filters or not self.dilations or any(v < 1 for v in self.dilations):
            raise NetError("conv layer needs at least one filter type and positive dilations")
        self.M, self.d, self.max_order, self.boundary = M, d, max_order, boundary
        self.banks = [enumerate_invariant_filters(M, d, kp, pp) for kp, pp in self.filters]
        self.banks = [b for b in self.banks if len(b)]
        self._taps = {}

    def _out_key(self, key, bank):
        k, p = key
        return (capped_order(k + bank.k, self.max_order), p * bank.parity)

    def edges(self, in_keys):
        return [(key, self._out_key(key, b)) for key in in_keys for b in self.banks]

    def bind(self, in_groups, live_out, offset):
        self.plan = []
        out = {}
        self.offset = offset
        for key in sorted(in_groups):
            n = in_groups[key]
            for b in self.banks:
                okey = self._out_key(key, b)
                if okey not in live_out:
                    continue
                m = len(b) * len(self.dilations)
                k_full = key[0] + b.k
                mult = contraction_multiplicity(k_full, okey[0])
                self.plan.append((key, b, okey, offset, (m, n)))
                offset += m * n
                out[okey] = out.get(okey, 0) + m * mult
        self.n_params = offset - self.offset
        return out

    def _filters(self, bank, N):
        cache_key = (id(bank), N)
        if cache_key not in self._taps:
            D = len(self.dilations)
            filt = np.repeat(bank.matrix().reshape(len(bank), self.M**self.d, -1), D, axis=0)
            tables = [tap_table(N, self.d, self.M, dil, self.boundary) for dil in self.dilations]
            src = np.stack([tables[j] for _ in range(len(bank)) for j in range(D)])
            self._taps[cache_key] = (np.ascontiguousarray(filt), np.ascontiguousarray(src))
        return self._taps[cache_key]

    def forward(self, tape, theta, stack, N):
        parts = {}
        for key, bank, okey, off, shape in self.plan:
            w = ad.param_slice(tape, theta, off, shape)
            mixed = ad.mix(tape, stack[key], w)
            filt, src = self._filters(bank, N)
            conv = ad.geo_conv(tape, mixed, filt, src)
            conv = contract_node(tape, conv, self.d, key[0] + bank.k, okey[0])
            parts.setdefault(okey, []).append(conv)
        return {key: ad.concat(tape, nodes) for key, nodes in sorted(parts.items())}

    def to_json(self):
        return {"type": "conv", "filters": [list(f) for f in self.filters], "dilations": self.dilations}


class ContractLayer(Layer):
    """All unique contractions to the target order; groups that cannot reach it are dropped."""

    def __init__(self, target_k, d):
        self.target_k, self.d = int(target_k), d

    def _reach(self, key):
        k, _ = key
        return k >= self.target_k and (k - self.target_k) % 2 == 0

    def edges(self, in_keys):
        return [(key, (self.target_k, key[1])) for key in in_keys if self._reach(key)]

    def bind(self, in_groups, live_out, offset):
        self.offset = offset
        self.plan = [key for key in sorted(in_groups) if self._reach(key) and (self.target_k, key[1]) in live_out]
        out = {}
        for key in self.plan:
            okey = (self.target_k, key[1])
            out[okey] = out.get(okey, 0) + in_groups[key] * contraction_multiplicity(key[0], self.target_k)
        return out

    def forward(self, tape, theta, stack, N):
        parts = {}
        for key in self.plan:
            node = contract_node(tape, stack[key], self.d, key[0], self.target_k)
            parts.setdefault((self.target_k, key[1]), []).append(node)
        return {key: ad.concat(tape, nodes) for key, nodes in sorted(parts.items())}

    def to_json(self):
        return {"type": "contract", "target_k": self.target_k}


class ActivationLayer(Layer):
    """Even-order positive-parity images are fully contracted to scalars and squashed.

    Odd orders and negative parity groups pass through untouched: a pointwise
    nonlinearity on a pseudoscalar would not commute with reflections.
    """

    def __init__(self, kind, slope, d):
        if kind not in ad.ACTIVATIONS:
            raise NetError(f"unknown activation {kind!r}")
        self.kind, self.slope, self.d = kind, float(slope), d

    @staticmethod
    def _squashed(key):
        k, p = key
        return p == 1 and k % 2 == 0

    def _out_key(self, key):
        return (0, 1) if self._squashed(key) else key

    def edges(self, in_keys):
        return [(key, self._out_key(key)) for key in in_keys]

    def bind(self, in_groups, live_out, offset):
        self.offset = offset
        self.plan = [key for key in sorted(in_groups) if self._out_key(key) in live_out]
        out = {}
        for key in self.plan:
            okey = self._out_key(key)
            mult = contraction_multiplicity(key[0], 0) if self._squashed(key) else 1
            out[okey] = out.get(okey, 0) + in_groups[key] * mult
        return out

    def forward(self, tape, theta, stack, N):
        scalars, out = [], {}
        for key in self.plan:
            if self._squashed(key):
                scalars.append(contract_node(tape, stack[key], self.d, key[0], 0))
            else:
                out[key] = stack[key]
        if scalars:
            out[(0, 1)] = ad.activate(tape, ad.concat(tape, scalars), self.kind, self.slope)
        return dict(sorted(out.items()))

    def to_json(self):
        return {"type": "activation", "kind": self.kind, "slope": self.slope}


class OuterLayer(Layer):
    """Inputs plus products of weighted group sums, for every multiset of 2..degree groups."""

    def __init__(self, degree, d, max_order):
        if degree < 2:
            raise NetError("outer product layer needs degree >= 2")
        self.degree, self.d, self.max_order = int(degree), d, max_order

    def _terms(self, in_keys):
        keys = sorted(in_keys)
        for j in range(2, self.degree + 1):
            yield from combinations_with_replacement(keys, j)

    def _term_key(self, term):
        k = sum(key[0] for key in term)
        p = int(np.prod([key[1] for key in term]))
        return (capped_order(k, self.max_order), p)

    def edges(self, in_keys):
        out = [(key, key) for key in in_keys]
        for term in self._terms(in_keys):
            okey = self._term_key(term)
            out.extend((key, okey) for key in term)
        return out

    def bind(self, in_groups, live_out, offset):
        self.offset = offset
        self.passthrough = [key for key in sorted(in_groups) if key in live_out]
        out = {key: in_groups[key] for key in self.passthrough}
        self.plan = []
        for term in self._terms(in_groups):
            okey = self._term_key(term)
            if okey not in live_out:
                continue
            slots = []
            for key in term:
                slots.append((key, offset, (1, in_groups[key])))
                offset += in_groups[key]
            k_full = sum(key[0] for key in term)
            self.plan.append((slots, k_full, okey))
            out[okey] = out.get(okey, 0) + contraction_multiplicity(k_full, okey[0])
        self.n_params = offset - self.offset
        return out

    def forward(self, tape, theta, stack, N):
        parts = {key: [stack[key]] for key in self.passthrough}
        for slots, k_full, okey in self.plan:
            prod = None
            for key, off, shape in slots:
                factor = ad.mix(tape, stack[key], ad.param_slice(tape, theta, off, shape))
                prod = factor if prod is None else ad.pixel_outer(tape, prod, factor)
            parts.setdefault(okey, []).append(contract_node(tape, prod, self.d, k_full, okey[0]))
        return {key: ad.concat(tape, nodes) for key, nodes in sorted(parts.items())}

    def to_json(self):
        return {"type": "outer", "degree": self.degree}


class FinalCombine(Layer):
    """Learned linear combination of every image in the output group."""

    def __init__(self, out_key):
        self.out_key = tuple(out_key)

    def edges(self, in_keys):
        return [(self.out_key, self.out_key)] if self.out_key in in_keys else []

    def bind(self, in_groups, live_out, offset):
        if self.out_key not in in_groups:
            raise NetError(f"no images of order/parity {self.out_key} reach the final combination")
        self.offset = offset
        self.shape = (1, in_groups[self.out_key])
        self.n_params = in_groups[self.out_key]
        return {self.out_key: 1}

    def forward(self, tape, theta, stack, N):
        w = ad.param_slice(tape, theta, self.offset, self.shape)
        return {self.out_key: ad.mix(tape, stack[self.out_key], w)}

    def to_json(self):
        return {"type": "final"}
