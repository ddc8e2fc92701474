"""Network specifications, presets and the GI-Net model.

A spec is a plain JSON-compatible dict, for example::

    {"kind": "ginet", "d": 2, "M": 3, "max_order": 5,
     "input": [0, 1], "output": [1, 1],
     "layers": [{"type": "conv", "filters": [[0, 1], [1, 1]], "dilations": [1]},
                {"type": "contract", "target_k": 1},
                {"type": "final"}]}

``build_model`` turns a spec into a model with ``n_params`` and
``forward(tape, theta, x)`` where ``x`` is a batch of flat images
``(B, N**d, d**k)``.
"""
import copy

import numpy as np

from geomnet.ginet import autodiff as ad
from geomnet.image_algebra import tap_table
from geomnet.ginet.layers import (
    ActivationLayer,
    ConvLayer,
    ContractLayer,
    FinalCombine,
    NetError,
    OuterLayer,
)

SPEC_VERSION = 1
BOUNDARIES = ("torus", "zero")


class GINet:
    def __init__(self, spec):
        self.spec = copy.deepcopy(spec)
        self.d = int(spec["d"])
        self.M = int(spec.get("M", 3))
        self.max_order = spec.get("max_order", 5)
        self.boundary = spec.get("boundary", "torus")
        if self.boundary not in BOUNDARIES:
            raise NetError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        self.input_key = tuple(spec["input"])
        self.output_key = tuple(spec["output"])
        self.layers = [self._make_layer(desc) for desc in spec["layers"]]
        if not self.layers or not isinstance(self.layers[-1], FinalCombine):
            raise NetError("a GI-Net must end with a final combination layer")
        self._bind()

    def _make_layer(self, desc):
        kind = desc["type"]
        if kind == "conv":
            return ConvLayer(desc["filters"], desc["dilations"], self.M, self.d, self.max_order, self.boundary)
        if kind == "contract":
            return ContractLayer(desc["target_k"], self.d)
        if kind == "activation":
            return ActivationLayer(desc["kind"], desc.get("slope", 0.01), self.d)
        if kind == "outer":
            return OuterLayer(desc["degree"], self.d, self.max_order)
        if kind == "final":
            return FinalCombine(self.output_key)
        raise NetError(f"unknown layer type {kind!r}")

    def _bind(self):
        # forward: which keys can appear after each layer
        keys = [{self.input_key}]
        for layer in self.layers:
            keys.append({o for _, o in layer.edges(keys[-1])})
        if self.output_key not in keys[-1]:
            raise NetError(f"output {self.output_key} is unreachable from input {self.input_key}")
        # backward: which keys are consumed downstream
        live = [None] * (len(self.layers) + 1)
        live[-1] = {self.output_key}
        for i in range(len(self.layers) - 1, -1, -1):
            live[i] = {a for a, b in self.layers[i].edges(keys[i]) if b in live[i + 1]}
        groups = {self.input_key: 1}
        offset = 0
        self.group_trace = [dict(groups)]
        for i, layer in enumerate(self.layers):
            groups = {k: n for k, n in groups.items() if k in live[i]}
            groups = layer.bind(groups, live[i + 1], offset)
            offset += layer.n_params
            self.group_trace.append(dict(groups))
        self.n_params = offset
        self.max_seen_order = max(k for g in self.group_trace for k, _ in g)

    @property
    def input_spec(self):
        return self.input_key

    @property
    def output_spec(self):
        return self.output_key

    def forward(self, tape, theta, x):
        x = np.asarray(x, dtype=np.float64)
        N = round(x.shape[1] ** (1.0 / self.d))
        if N**self.d != x.shape[1] or x.shape[2] != self.d ** self.input_key[0]:
            raise NetError(f"input batch of shape {x.shape} does not match {self.input_key}")
        stack = {self.input_key: tape.constant(x[:, None])}
        for layer in self.layers:
            stack = layer.forward(tape, theta, stack, N)
        out = stack[self.output_key]
        return _squeeze_image_axis(tape, out)


def _squeeze_image_axis(tape, node):
    shape = node.value.shape
    return tape.record(node.value[:, 0], (node,), lambda g: (g.reshape(shape),))


# ---------------------------------------------------------------------------
# baseline CNN with learned scalar filters


class BaselineCNN:
    """Ordinary CNN on component channels with learned M x M filters.

    ``conv`` layers convolve once per listed dilation and stack the results
    along the channel axis (dilation-major). ``dilation_sum`` collapses those
    blocks with one learned weight per dilation.
    """

    def __init__(self, spec):
        self.spec = copy.deepcopy(spec)
        self.d = int(spec["d"])
        self.M = int(spec.get("M", 3))
        self.boundary = spec.get("boundary", "torus")
        if self.boundary not in BOUNDARIES:
            raise NetError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        self.input_key = tuple(spec["input"])
        self.output_key = tuple(spec["output"])
        channels = self.d ** self.input_key[0]
        offset = 0
        self.plan = []
        for desc in spec["layers"]:
            kind = desc["type"]
            if kind == "conv":
                dil = [int(v) for v in desc["dilations"]]
                shape = (self.M**self.d, channels, int(desc["out"]))
                size = int(np.prod(shape))
                self.plan.append(("conv", dil, [(offset + j * size, shape) for j in range(len(dil))]))
                offset += size * len(dil)
                channels = shape[2] * len(dil)
            elif kind == "dilation_sum":
                blocks = int(desc["blocks"])
                if channels % blocks:
                    raise NetError(f"{channels} channels do not split into {blocks} dilation blocks")
                self.plan.append(("dilation_sum", blocks, (offset, (blocks,))))
                offset += blocks
                channels //= blocks
            elif kind == "activation":
                if desc["kind"] not in ad.ACTIVATIONS:
                    raise NetError(f"unknown activation {desc['kind']!r}")
                self.plan.append(("activation", desc["kind"], float(desc.get("slope", 0.01))))
            else:
                raise NetError(f"unknown baseline layer type {kind!r}")
        if channels != self.d ** self.output_key[0]:
            raise NetError(f"baseline ends with {channels} channels, output needs {self.d ** self.output_key[0]}")
        self.n_params = offset

    @property
    def input_spec(self):
        return self.input_key

    @property
    def output_spec(self):
        return self.output_key

    def forward(self, tape, theta, x):
        x = np.asarray(x, dtype=np.float64)
        N = round(x.shape[1] ** (1.0 / self.d))
        h = tape.constant(x)
        for step in self.plan:
            if step[0] == "conv":
                outs = []
                for dil, (off, shape) in zip(step[1], step[2]):
                    w = ad.param_slice(tape, theta, off, shape)
                    outs.append(ad.chan_conv(tape, h, w, tap_table(N, self.d, self.M, dil, self.boundary)))
                h = ad.concat(tape, outs, axis=2)
            elif step[0] == "dilation_sum":
                blocks, (off, shape) = step[1], step[2]
                w = ad.param_slice(tape, theta, off, shape)
                c = h.value.shape[2] // blocks
                mat = tape.record(
                    np.kron(w.value[:, None], np.eye(c)), (w,), _kron_back(blocks, c)
                )
                h = ad.channel_matmul(tape, h, mat)
            else:
                h = ad.activate(tape, h, step[1], step[2])
        return h


def _kron_back(blocks, c):
    def back(g):
        return (np.einsum("bij,ij->b", g.reshape(blocks, c, c), np.eye(c)),)

    return back


# ---------------------------------------------------------------------------
# presets


def _conv(filters, dilations):
    return {"type": "conv", "filters": [list(f) for f in filters], "dilations": list(dilations)}


def preset(name):
    """Named architecture specs."""
    if name == "gravity":
        filters = [(0, 1), (1, 1)]
        return {
            "kind": "ginet", "d": 2, "M": 3, "max_order": 5, "input": [0, 1], "output": [1, 1],
            "layers": [
                _conv(filters, [1]),
                _conv(filters, range(1, 16)),
                _conv(filters, range(1, 8)),
                {"type": "contract", "target_k": 1},
                {"type": "final"},
            ],
        }
    if name in ("charge", "charge_literal"):
        filters = [(1, 1), (2, 1)] if name == "charge" else [(0, 1), (1, 1), (2, 1)]
        layers = []
        for dil in (1, 2, 4, 2, 1, 1, 2, 1, 1):
            layers.append(_conv(filters, [dil]))
            layers.append({"type": "activation", "kind": "leaky_relu", "slope": 0.01})
        layers += [{"type": "contract", "target_k": 1}, {"type": "final"}]
        return {"kind": "ginet", "d": 2, "M": 3, "max_order": 5, "input": [1, 1], "output": [1, 1], "layers": layers}
    if name == "relu_stack":
        filters = [(1, 1), (2, 1)]
        return {
            "kind": "ginet", "d": 2, "M": 3, "max_order": 3, "input": [1, 1], "output": [1, 1],
            "layers": [
                _conv(filters, [1]),
                {"type": "activation", "kind": "relu"},
                _conv(filters, [1]),
                {"type": "activation", "kind": "relu"},
                _conv(filters, [1]),
                {"type": "contract", "target_k": 1},
                {"type": "final"},
            ],
        }
    if name == "polynomial":
        return {
            "kind": "ginet", "d": 2, "M": 3, "max_order": 3, "input": [1, 1], "output": [1, 1],
            "layers": [
                _conv([(1, 1), (2, 1)], [1]),
                {"type": "outer", "degree": 2},
                _conv([(1, 1)], [1, 2]),
                {"type": "contract", "target_k": 1},
                {"type": "final"},
            ],
        }
    if name == "gravity_baseline":
        return {
            "kind": "baseline", "d": 2, "M": 3, "input": [0, 1], "output": [1, 1],
            "layers": [
                {"type": "conv", "dilations": [1], "out": 2},
                {"type": "conv", "dilations": list(range(1, 16)), "out": 2},
                {"type": "conv", "dilations": list(range(1, 8)), "out": 2},
                {"type": "dilation_sum", "blocks": 7},
            ],
        }
    if name == "charge_baseline":
        layers = []
        dils = (1, 2, 4, 2, 1, 1, 2, 1, 1)
        for i, dil in enumerate(dils):
            last = i == len(dils) - 1
            layers.append({"type": "conv", "dilations": [dil], "out": 2 if last else 20})
            if not last:
                layers.append({"type": "activation", "kind": "leaky_relu", "slope": 0.01})
        return {"kind": "baseline", "d": 2, "M": 3, "input": [1, 1], "output": [1, 1], "layers": layers}
    raise NetError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")


GINET_PRESETS = ("gravity", "charge", "charge_literal", "relu_stack", "polynomial")
BASELINE_PRESETS = ("gravity_baseline", "charge_baseline")
PRESETS = GINET_PRESETS + BASELINE_PRESETS
REFERENCE_PARAM_COUNTS = {"gravity": 3085, "charge": 22986, "gravity_baseline": 4345, "charge_baseline": 25920}


def build_model(spec):
    if isinstance(spec, str):
        spec = preset(spec)
    kind = spec.get("kind", "ginet")
    if kind == "ginet":
        return GINet(spec)
    if kind == "baseline":
        return BaselineCNN(spec)
    raise NetError(f"unknown model kind {kind!r}")


def build_baseline(problem):
    return build_model(f"{problem}_baseline")


def predict(model, theta, x):
    tape = ad.Tape()
    theta_node = tape.leaf(theta, requires_grad=False)
    return model.forward(tape, theta_node, x).value


def loss_and_grad(model, theta, x, y):
    tape = ad.Tape()
    theta_node = tape.leaf(theta)
    pred = model.forward(tape, theta_node, x)
    loss = ad.rmse_loss(tape, pred, y)
    tape.backward(loss)
    grad = theta_node.grad if theta_node.grad is not None else np.zeros_like(theta)
    return float(loss.value), grad
