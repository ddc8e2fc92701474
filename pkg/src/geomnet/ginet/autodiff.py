"""A small tape-based reverse-mode autodiff over numpy arrays.

Every op creates a ``Node`` recorded on the active ``Tape``; ``Tape.backward``
walks the recording in reverse and accumulates gradients. Only the ops the
networks need are provided. Constant operands (filters, tap tables, contraction
matrices) are plain arrays and get no gradient.
"""
import numpy as np

from geomnet import kernels


class Node:
    __slots__ = ("value", "grad", "parents", "backward_fn", "needs_grad", "op")

    def __init__(self, value, parents=(), backward_fn=None, op=None):
        self.value = value
        self.op = op
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.needs_grad = any(p.needs_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g


class Tape:
    def __init__(self):
        self.nodes = []

    def leaf(self, value, requires_grad=True):
        node = Node(np.asarray(value, dtype=np.float64))
        node.needs_grad = requires_grad
        self.nodes.append(node)
        return node

    def constant(self, value):
        return self.leaf(value, requires_grad=False)

    def record(self, value, parents, backward_fn, op=None):
        node = Node(value, tuple(parents), backward_fn, op)
        self.nodes.append(node)
        return node

    def backward(self, out, seed=None):
        if seed is None:
            if out.value.size != 1:
                raise ValueError("backward from a non-scalar node needs an explicit seed")
            seed = np.ones_like(out.value)
        out.grad = np.asarray(seed, dtype=np.float64)
        for node in reversed(self.nodes):
            if node.grad is None or node.backward_fn is None or not node.needs_grad:
                continue
            grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is not None and parent.needs_grad:
                    parent._accumulate(g)


# ---------------------------------------------------------------------------
# ops


def param_slice(tape, theta, start, shape):
    size = int(np.prod(shape))
    stop = start + size

    def back(g):
        full = np.zeros_like(theta.value)
        full[start:stop] = g.ravel()
        return (full,)

    return tape.record(theta.value[start:stop].reshape(shape), (theta,), back)


def mix(tape, x, w):
    """Weighted sums over the image axis: x (B, n, P, c), w (m, n) -> (B, m, P, c)."""
    out = np.einsum("bnpc,mn->bmpc", x.value, w.value, optimize=True)

    def back(g):
        gx = np.einsum("bmpc,mn->bnpc", g, w.value, optimize=True)
        gw = np.einsum("bmpc,bnpc->mn", g, x.value, optimize=True)
        return gx, gw

    return tape.record(out, (x, w), back)


def geo_conv(tape, x, filt, src):
    """Fixed-filter geometric convolution per channel: x (B, C, P, a) -> (B, C, P, a*b)."""
    a = x.value.shape[3]
    out = kernels.geo_conv(x.value, filt, src)

    def back(g):
        return (kernels.geo_conv_adjoint(g, filt, src, a),)

    return tape.record(out, (x,), back)


def linear_components(tape, x, mat):
    """Constant linear map on the component axis: x (B, n, P, a), mat (a_out, a)."""
    out = x.value @ mat.T

    def back(g):
        return (g @ mat,)

    return tape.record(out, (x,), back)


def concat(tape, nodes, axis=1):
    if len(nodes) == 1:
        return nodes[0]
    sizes = [n.value.shape[axis] for n in nodes]
    out = np.concatenate([n.value for n in nodes], axis=axis)
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return tape.record(out, tuple(nodes), back)


def pixel_outer(tape, x, y):
    """Pixelwise outer product of component vectors: (..., a), (..., b) -> (..., a*b)."""
    a, b = x.value.shape[-1], y.value.shape[-1]
    out = (x.value[..., :, None] * y.value[..., None, :]).reshape(x.value.shape[:-1] + (a * b,))

    def back(g):
        g = g.reshape(g.shape[:-1] + (a, b))
        return np.einsum("...ab,...b->...a", g, y.value), np.einsum("...ab,...a->...b", g, x.value)

    return tape.record(out, (x, y), back)


def add(tape, x, y):
    return tape.record(x.value + y.value, (x, y), lambda g: (g, g))


def relu(tape, x):
    mask = x.value > 0
    return tape.record(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), op="relu")


def leaky_relu(tape, x, slope):
    factor = np.where(x.value > 0, 1.0, slope)
    return tape.record(x.value * factor, (x,), lambda g: (g * factor,), op="leaky_relu")


def sigmoid(tape, x):
    s = 1.0 / (1.0 + np.exp(-x.value))
    return tape.record(s, (x,), lambda g: (g * s * (1.0 - s),))


ACTIVATIONS = {"relu", "leaky_relu", "sigmoid"}


def activate(tape, x, kind, slope=0.01):
    if kind == "relu":
        return relu(tape, x)
    if kind == "leaky_relu":
        return leaky_relu(tape, x, slope)
    if kind == "sigmoid":
        return sigmoid(tape, x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}")


def chan_conv(tape, x, w, src):
    """Learned scalar-channel convolution: x (B, P, Ci), w (T, Ci, Co)."""
    out = kernels.chan_conv(x.value, w.value, src)

    def back(g):
        return kernels.chan_conv_grads(x.value, w.value, src, g)

    return tape.record(out, (x, w), back)


def channel_matmul(tape, x, w):
    """x (B, P, Ci) @ w (Ci, Co)."""
    out = x.value @ w.value

    def back(g):
        return g @ w.value.T, np.einsum("bpi,bpo->io", x.value, g)

    return tape.record(out, (x, w), back)


def rmse_loss(tape, pred, target):
    """Mean over samples of the per-sample root mean squared error."""
    diff = pred.value - target
    B = diff.shape[0]
    per = np.sqrt(np.mean(diff.reshape(B, -1) ** 2, axis=1))
    n = diff[0].size

    def back(g):
        safe = np.where(per > 0, per, 1.0)
        coef = np.where(per > 0, 1.0 / (n * safe * B), 0.0)
        return (g * coef.reshape((B,) + (1,) * (diff.ndim - 1)) * diff,)

    return tape.record(np.array(per.mean()), (pred,), back)


def per_sample_rmse(pred, target):
    diff = np.asarray(pred) - np.asarray(target)
    return np.sqrt(np.mean(diff.reshape(diff.shape[0], -1) ** 2, axis=1))


def kink_signature(tape):
    """Sign pattern of every piecewise-linear activation input on the tape."""
    return [node.parents[0].value > 0 for node in tape.nodes if node.op in ("relu", "leaky_relu")]
