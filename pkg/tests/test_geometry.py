import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slabcover.geometry import (
    apply_rotation, check_direction, dominance_matrix, dominates, in_cone, in_cone_norm_form,
    is_rotation, is_tangent, random_rotation,
)
from slabcover.measures import DiscreteMeasure, gen_cantor_product

from oracles import leq

# integer coordinates keep the squared oracle exact, ties included
coord = st.integers(-20, 20)


def test_in_cone_axis_and_boundary():
    assert in_cone((1, 0), 1)
    assert in_cone((1, 1, 0), 1)  # closed cone keeps its boundary
    assert not in_cone((1, 2), 1)
    assert not in_cone((-1, 0), 1)
    assert in_cone((-1, 0), 1, positive_only=False)


def test_in_cone_forms_agree(rng):
    V = rng.standard_normal((10_000, 3))
    a = [in_cone(v, j) for v in V for j in (1, 2, 3)]
    b = [in_cone_norm_form(v, j) for v in V for j in (1, 2, 3)]
    assert a == b


def test_direction_range():
    with pytest.raises(ValueError):
        in_cone((1, 0), 3)
    with pytest.raises(ValueError):
        check_direction(0, 2)
    assert check_direction(2, 2) == 1


def test_dominates_examples():
    assert dominates((0, 0), (1, 0.5), 1)
    assert not dominates((0, 0), (1, 2), 1)
    assert dominates((3, 4), (3, 4), 2)
    with pytest.raises(ValueError):
        dominates((0, 0), (0, 0, 0), 1)


@settings(max_examples=300, deadline=None)
@given(st.lists(coord, min_size=3, max_size=3), st.lists(coord, min_size=3, max_size=3), st.integers(1, 3))
def test_dominates_matches_squared_oracle(s, t, j):
    assert dominates(s, t, j) == leq(s, t, j)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(-6, 6), min_size=2, max_size=2),
       st.lists(st.integers(-6, 6), min_size=2, max_size=2), st.integers(1, 2))
def test_antisymmetry_on_integer_points(s, t, j):
    if dominates(s, t, j) and dominates(t, s, j):
        assert s == t


def test_incomparable_pairs_satisfy_lipschitz_inequality(rng):
    X = rng.random((400, 3))
    for j in (1, 2, 3):
        D = dominance_matrix(X, j)
        inc = ~(D | D.T)
        c = j - 1
        dj = np.abs(X[:, None, c] - X[None, :, c])
        dh = np.linalg.norm(np.delete(X[:, None, :] - X[None, :, :], c, axis=2), axis=2)
        assert np.all(dj[inc] <= dh[inc])


def test_dominance_matrix_matches_scalar(rng):
    X = rng.random((30, 3))
    D = dominance_matrix(X, 2)
    for s in range(30):
        for t in range(30):
            assert D[s, t] == dominates(X[s], X[t], 2)


def test_random_rotation_properties():
    R = random_rotation(0, 2)
    assert np.max(np.abs(R.T @ R - np.eye(2))) <= 1e-12
    assert np.array_equal(random_rotation(7, 4), random_rotation(7, 4))
    for seed in range(50):
        assert is_rotation(random_rotation(seed, 3))
    with pytest.raises(ValueError):
        random_rotation(0, 1)


def test_haar_mean_entry_is_centred():
    vals = [random_rotation(s, 3)[0, 0] for s in range(1000)]
    assert -0.05 <= float(np.mean(vals)) <= 0.05


def test_is_tangent():
    assert is_tangent(np.array([1, 1, 0]) / math.sqrt(2), 1)
    assert not is_tangent(np.array([1.0, 0, 0]), 1)
    with pytest.raises(ValueError):
        is_tangent(np.array([1, 1]) / math.sqrt(2), 1)
    with pytest.raises(ValueError):
        is_tangent(np.array([1.0, 1.0, 0]), 1)


def test_apply_rotation():
    mu = DiscreteMeasure([[1.0, 0.0]], [0.5], check_box=True)
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    out = apply_rotation(R, mu)
    assert np.allclose(out.points, [[0.0, 1.0]], atol=0) and out.weights.tolist() == [0.5]
    c = gen_cantor_product(1 / 3, 2)
    assert apply_rotation(np.eye(2), c) == c
    assert apply_rotation(random_rotation(3, 2), c).total_mass == c.total_mass
    with pytest.raises(ValueError):
        apply_rotation(np.eye(3), c)
