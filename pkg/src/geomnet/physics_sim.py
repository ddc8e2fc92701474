"""Toy physics datasets on a 2-d pixel grid.

Coordinates are continuous with pixel i centred at the integer point i, so a
grid of sidelength N covers [0, N). Forces use plain Euclidean distance with
no periodic images.

* gravity: point masses sit on distinct pixels; the input is the scalar mass
  image, the target the Newtonian field sum_j m_j (x_j - i) / |x_j - i|^3.
* charge: unit charges repel with velocity sum_j (x_i - x_j) / |x_i - x_j|^3
  and move by explicit Euler steps; input and target are squashed renders of
  the field after the first and the last step.

Every sample draws from its own stream ``prng(seed, problem_tag, index)``.
"""
from dataclasses import dataclass, field

import numpy as np

from geomnet import numerics
from geomnet.image_algebra import GeometricImage

GRAVITY_TAG = 0
CHARGE_TAG = 1
COINCIDENCE = 1e-9
MAX_RESAMPLES = 100


class PhysicsError(ValueError):
    pass


@dataclass
class ParticleSet:
    positions: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if len(self.positions) != len(self.weights):
            raise PhysicsError("positions and weights differ in length")
        if not np.all(np.isfinite(self.positions)):
            raise PhysicsError("particle positions must be finite")
        if np.any(self.weights <= 0):
            raise PhysicsError("particle weights must be positive")


@dataclass
class SamplePair:
    input: GeometricImage
    target: GeometricImage
    metadata: dict = field(default_factory=dict)


def _pixel_centres(N):
    ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    return np.stack([ii, jj], axis=-1).astype(np.float64)  # (N, N, 2)


def inverse_square_field(particles, N):
    """sum_j w_j (x_j - i) / |x_j - i|^3 at every pixel centre; singular terms skipped."""
    grid = _pixel_centres(N)
    out = np.zeros((N, N, 2))
    for x, w in zip(particles.positions, particles.weights):
        diff = x - grid
        r = np.sqrt(np.sum(diff**2, axis=-1))
        live = r > 0
        scale = np.zeros_like(r)
        scale[live] = w / r[live] ** 3
        out += diff * scale[..., None]
    return out


def squash(v, s=0.2):
    """(sigmoid(|v|/s) - 1/2) v/|v| over the last axis; zero maps to zero."""
    if s <= 0:
        raise PhysicsError(f"squash scale must be positive, got {s}")
    v = np.asarray(v, dtype=np.float64)
    norm = np.sqrt(np.sum(v**2, axis=-1, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    # sigmoid(x) - 1/2 == tanh(x/2)/2, without the cancellation near zero
    mag = 0.5 * np.tanh(norm / (2.0 * s))
    return np.where(norm > 0, mag * v / safe, 0.0)


def render_field(particles, N, squash_scale=0.2):
    """Squashed field pointing away from every particle, sampled at pixel centres."""
    if len(particles.weights) == 0:
        return GeometricImage.zeros(N, 2, 1)
    # away from the particles: the negative of the attracting field
    raw = -inverse_square_field(particles, N)
    return GeometricImage(squash(raw, squash_scale), 1, 2)


# ---------------------------------------------------------------------------
# gravity


def gravity_sample(seed, index, N=16, n_masses=5):
    rng = numerics.prng(seed, GRAVITY_TAG, index)
    flat = rng.choice(N * N, size=n_masses, replace=False)
    masses = rng.uniform(0.0, 1.0, size=n_masses)
    while np.any(masses <= 0.0):  # U[0,1) can return 0 exactly
        masses = np.where(masses > 0.0, masses, rng.uniform(0.0, 1.0, size=n_masses))
    positions = np.stack([flat // N, flat % N], axis=-1).astype(np.float64)
    particles = ParticleSet(positions, masses)
    mass_img = np.zeros((N, N))
    mass_img[flat // N, flat % N] = masses
    target = GeometricImage(inverse_square_field(particles, N), 1, 2)
    meta = {"problem": "gravity", "seed": seed, "index": index, "N": N, "n_masses": n_masses,
            "positions": positions.tolist(), "masses": masses.tolist()}
    return SamplePair(GeometricImage(mass_img, 1, 2), target, meta)


def gen_gravity(seed, count, N=16, n_masses=5, start=0):
    if count < 1:
        raise PhysicsError("count must be >= 1")
    if n_masses > N * N:
        raise PhysicsError(f"cannot place {n_masses} masses on {N * N} pixels")
    return [gravity_sample(seed, start + i, N, n_masses) for i in range(count)]


# ---------------------------------------------------------------------------
# charges


def coulomb_velocity(positions):
    """V(x_i) = sum_{j != i} (x_i - x_j) / |x_i - x_j|^3 for unit charges."""
    diff = positions[:, None, :] - positions[None, :, :]
    r = np.sqrt(np.sum(diff**2, axis=-1))
    np.fill_diagonal(r, np.inf)
    if np.min(r) < COINCIDENCE:
        raise PhysicsError("particles coincide")
    return np.sum(diff / r[..., None] ** 3, axis=1)


def euler_step(positions, dt):
    return positions + dt * coulomb_velocity(positions)


def simulate_charges(positions, steps, dt):
    """All states x(0), x(dt), ..., x(steps*dt)."""
    states = [np.asarray(positions, dtype=np.float64)]
    for _ in range(steps):
        states.append(euler_step(states[-1], dt))
    return states


def charge_sample(seed, index, N=16, n_charges=5, steps=10, dt=0.01, squash_scale=0.2, low=4.0, high=12.0):
    rng = numerics.prng(seed, CHARGE_TAG, index)
    for attempt in range(MAX_RESAMPLES):
        init = rng.uniform(low, high, size=(n_charges, 2))
        try:
            states = simulate_charges(init, steps, dt)
        except PhysicsError:
            continue
        break
    else:
        raise PhysicsError(f"could not draw a non-degenerate configuration in {MAX_RESAMPLES} tries")
    ones = np.ones(n_charges)
    inp = render_field(ParticleSet(states[1], ones), N, squash_scale)
    tgt = render_field(ParticleSet(states[-1], ones), N, squash_scale)
    meta = {"problem": "charge", "seed": seed, "index": index, "N": N, "n_charges": n_charges,
            "steps": steps, "dt": dt, "squash_scale": squash_scale, "resamples": attempt,
            "initial_positions": init.tolist()}
    return SamplePair(inp, tgt, meta)


def gen_charges(seed, count, steps_T=10, dt=0.01, N=16, n_charges=5, squash_scale=0.2, start=0):
    if count < 1:
        raise PhysicsError("count must be >= 1")
    if steps_T < 1:
        raise PhysicsError("steps_T must be >= 1")
    if not dt > 0:
        raise PhysicsError(f"dt must be positive, got {dt}")
    if n_charges < 1:
        raise PhysicsError("need at least one charge")
    return [charge_sample(seed, start + i, N, n_charges, steps_T, dt, squash_scale) for i in range(count)]


def stack_pairs(pairs):
    """Flat (S, P, comps) input and target arrays for training."""
    x = np.stack([p.input.pixels() for p in pairs])
    y = np.stack([p.target.pixels() for p in pairs])
    return x, y
