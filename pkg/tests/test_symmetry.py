import numpy as np
import pytest

from geomnet.symmetry import (
    GroupElement,
    SymmetryError,
    act_on_pixel,
    compose,
    generate_bd,
    inverse,
    pixel_grid,
    pixel_permutation,
)


@pytest.mark.parametrize("d,order", [(1, 2), (2, 8), (3, 48), (4, 384)])
def test_group_order(d, order):
    assert len(generate_bd(d)) == order


@pytest.mark.parametrize("d", [2, 3])
def test_group_axioms(d):
    group = generate_bd(d)
    ident = GroupElement.identity(d)
    assert ident in group
    for g in group:
        assert np.array_equal(g.array @ g.array.T, np.eye(d))
        assert g.det == round(np.linalg.det(g.array))
        assert inverse(g) in group
        assert np.array_equal(inverse(g).array, g.array.T)
        assert compose(g, inverse(g)).is_identity()
    rng = np.random.default_rng(3)
    for _ in range(50):
        g, h = (group[int(i)] for i in rng.integers(len(group), size=2))
        gh = compose(g, h)
        assert gh in group
        assert gh.det == g.det * h.det


def test_inverse_identity():
    assert inverse(GroupElement.identity(3)).is_identity()


def test_canonical_order_is_deterministic():
    group = generate_bd(2)
    keys = [tuple(v for row in g.matrix for v in row) for g in group]
    assert keys == sorted(keys)


def test_rejects_non_signed_permutation():
    with pytest.raises(SymmetryError):
        GroupElement(((1, 1), (0, 1)))
    with pytest.raises(SymmetryError):
        GroupElement(((2, 0), (0, 1)))


def test_compose_dimension_mismatch():
    with pytest.raises(SymmetryError):
        compose(GroupElement.identity(2), GroupElement.identity(3))


def test_pixel_action_examples():
    half_turn = GroupElement(((-1, 0), (0, -1)))
    assert act_on_pixel(half_turn, (0, 0), 3).tolist() == [2, 2]
    assert act_on_pixel(GroupElement.identity(2), (1, 2), 5).tolist() == [1, 2]
    for g in generate_bd(2):
        assert act_on_pixel(g, (2, 2), 5).tolist() == [2, 2]


def test_pixel_action_even_n_rejected():
    with pytest.raises(SymmetryError):
        act_on_pixel(GroupElement.identity(2), (0, 0), 4)


@pytest.mark.parametrize("d,N", [(2, 3), (2, 5), (3, 3)])
def test_pixel_action_is_group_action(d, N):
    group = generate_bd(d)
    grid = pixel_grid(N, d)
    for g in group:
        moved = act_on_pixel(g, grid, N)
        assert len({tuple(p) for p in moved}) == N**d
        for h in list(group)[:8]:
            assert np.array_equal(act_on_pixel(g, act_on_pixel(h, grid, N), N), act_on_pixel(compose(g, h), grid, N))


def test_pixel_permutation_is_inverse_lookup():
    g = generate_bd(2)[3]
    src = pixel_permutation(g, 5)
    grid = pixel_grid(5, 2)
    back = act_on_pixel(g, grid[src], 5)
    assert np.array_equal(back, grid)
