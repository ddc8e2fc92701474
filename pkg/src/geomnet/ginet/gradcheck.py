"""Central finite-difference check of reverse-mode gradients."""
import numpy as np

from geomnet.ginet import autodiff as ad
from geomnet.ginet.net import loss_and_grad


def _loss(model, theta, x, y):
    return loss_and_grad(model, theta, x, y)[0]


def _signature(model, theta, x):
    tape = ad.Tape()
    model.forward(tape, tape.leaf(theta, requires_grad=False), x)
    return ad.kink_signature(tape)


def _same(a, b):
    return all(np.array_equal(p, q) for p, q in zip(a, b))


def gradient_check(model, theta, x, y, rng, n_coords=12, n_dirs=3, h=1e-5):
    """Relative error between analytic and finite-difference directional derivatives.

    Probes are random coordinate axes plus random unit directions. A probe
    whose +-h step flips the sign of any ReLU input is skipped: the loss is
    not differentiable across the kink and the difference quotient would
    measure the jump rather than the gradient. Returns
    ``(relative_error, n_used, n_skipped)``.
    """
    _, grad = loss_and_grad(model, theta, x, y)
    base = _signature(model, theta, x)
    dirs = []
    for i in rng.choice(len(theta), size=min(n_coords, len(theta)), replace=False):
        e = np.zeros_like(theta)
        e[i] = 1.0
        dirs.append(e)
    for _ in range(n_dirs):
        v = rng.standard_normal(len(theta))
        dirs.append(v / np.linalg.norm(v))
    fd, an, skipped = [], [], 0
    for v in dirs:
        plus, minus = theta + h * v, theta - h * v
        if base and not (_same(base, _signature(model, plus, x)) and _same(base, _signature(model, minus, x))):
            skipped += 1
            continue
        fd.append((_loss(model, plus, x, y) - _loss(model, minus, x, y)) / (2 * h))
        an.append(grad @ v)
    fd, an = np.array(fd), np.array(an)
    scale = np.linalg.norm(an)
    err = float(np.linalg.norm(fd - an) / scale) if scale > 0 else float(np.linalg.norm(fd))
    return err, len(fd), skipped
