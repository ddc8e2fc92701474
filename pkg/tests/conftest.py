import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geomnet.image_algebra import GeometricImage
from geomnet.tensor_core import GeometricTensor

settings.register_profile("geomnet", max_examples=20, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow], derandomize=True)
settings.load_profile("geomnet")

REL_TOL = 1e-10

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def rel_err(a, b):
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def assert_rel(a, b, tol=REL_TOL):
    if hasattr(a, "spec") and hasattr(b, "spec"):
        assert a.spec == b.spec, f"{a.spec} != {b.spec}"
    if hasattr(a, "parity") and hasattr(b, "parity"):
        assert (a.d, a.k, a.parity) == (b.d, b.k, b.parity)
    err = rel_err(a, b)
    assert err <= tol, f"relative error {err:.3e} > {tol:g}"


def rand_tensor(rng, d, k, parity=1):
    return GeometricTensor(rng.standard_normal((d,) * k), parity, d)


def rand_image(rng, N, d, k, parity=1):
    return GeometricImage(rng.standard_normal((N,) * d + (d,) * k), parity, d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def as_image(flat, N, d, key):
    k, p = key
    return GeometricImage(np.asarray(flat).reshape((N,) * d + (d,) * k), p, d)


def net_equivariance_error(model, theta, N, rng, n_translations=5):
    """Worst relative gap between f(g.A) and g.f(A) over B_d and random translations."""
    from geomnet.ginet import predict
    from geomnet.image_algebra import act_image, translate
    from geomnet.symmetry import generate_bd

    d = model.d
    A = rand_image(rng, N, d, *model.input_spec)
    ops = [lambda X, g=g: act_image(g, X) for g in generate_bd(d)]
    ops += [lambda X, t=tuple(rng.integers(0, N, size=d)): translate(X, t) for _ in range(n_translations)]
    batch = np.stack([A.pixels()] + [op(A).pixels() for op in ops])
    out = predict(model, theta, batch)
    base = as_image(out[0], N, d, model.output_spec)
    return max(rel_err(op(base), as_image(o, N, d, model.output_spec)) for op, o in zip(ops, out[1:]))


def invariant_nullspace_dim(M, d, k, parity):
    """Dimension of {C : g.C = C for all g}, built from the image action on one-hot filters."""
    from geomnet import numerics
    from geomnet.image_algebra import act_image
    from geomnet.symmetry import generate_bd

    n = M**d * d**k
    shape = (M,) * d + (d,) * k
    blocks = []
    for g in generate_bd(d):
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            cols.append(act_image(g, GeometricImage(e.reshape(shape), parity, d)).flat())
        blocks.append(np.stack(cols, axis=1) - np.eye(n))
    return n - numerics.rank(np.vstack(blocks))


def report_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda text: int(text.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
