import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invfeat.core import Permutation, apply_permutation
from invfeat.errors import ParseError
from invfeat.invariants import feature_pack
from invfeat.pointcloud import (
    as_cloud,
    center,
    cloud_from_text,
    cloud_to_text,
    gram,
    is_orthogonal,
    random_orthogonal,
    same_orbit_pointcloud,
    tilde_feature_pack,
    transform,
)
from invfeat.prng import SplitMix64


def test_gram_examples(rng):
    assert np.array_equal(gram(np.eye(2)).entries, np.eye(2))
    assert gram([[3.0], [4.0]]).entries.tolist() == [[25.0]]
    w = np.linalg.eigvalsh(gram(rng.normal((3, 6))).entries)
    assert w.min() >= -1e-10
    assert np.sum(w > 1e-8) <= 3


def test_as_cloud_validation():
    with pytest.raises(ValueError):
        as_cloud(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        as_cloud([[np.nan, 1.0]])


def test_center_examples(rng):
    V = np.array([[1.0, 3.0], [0.0, 0.0]])
    assert center(V).tolist() == [[-1.0, 1.0], [0.0, 0.0]]
    C = center(rng.normal((3, 7)))
    assert np.max(np.abs(C.mean(axis=1))) <= 1e-12
    np.testing.assert_allclose(center(C), C, atol=1e-15)


def test_center_commutes_with_group(rng):
    V = rng.normal((3, 9))
    U = random_orthogonal(3, 5)
    p = rng.permutation(9)
    np.testing.assert_allclose(center(transform(V, U, p)), transform(center(V), U, p), atol=1e-12)


def test_transform_moves_columns():
    V = np.array([[1.0, 2.0, 3.0]])
    assert transform(V, np.eye(1), [2, 0, 1]).tolist() == [[2.0, 3.0, 1.0]]


def test_gram_equivariance(rng):
    V = rng.normal((3, 8))
    p = Permutation(tuple(rng.permutation(8)))
    U = random_orthogonal(3, 77)
    G1 = gram(transform(V, U, p)).entries
    G2 = apply_permutation(gram(V), p).entries
    assert np.max(np.abs(G1 - G2)) <= 1e-10


def test_tilde_is_feature_pack_of_gram(rng):
    V = rng.normal((2, 5))
    assert np.array_equal(tilde_feature_pack(V).as_vector(), feature_pack(gram(V)).as_vector())
    assert not np.any(tilde_feature_pack(np.zeros((2, 4))).as_vector())


@given(st.integers(1, 4), st.integers(1, 9), st.integers(0, 2**32))
def test_tilde_invariance_property(d, n, seed):
    rng = SplitMix64(seed)
    V = rng.normal((d, n))
    W = transform(V, random_orthogonal(d, seed), rng.permutation(n))
    assert tilde_feature_pack(V).allclose(tilde_feature_pack(W), 1e-8)


def test_tilde_separation_d2_n4(rng):
    for _ in range(500):
        V, W = rng.normal((2, 4)), rng.normal((2, 4))
        assert not same_orbit_pointcloud(V, W, 1e-12)
        assert tilde_feature_pack(V).max_gap(tilde_feature_pack(W)) > 1e-6


def test_random_orthogonal():
    for seed in range(100):
        for d in (1, 2, 5, 10):
            assert is_orthogonal(random_orthogonal(d, seed))
    assert abs(random_orthogonal(1, 3)[0, 0]) == 1.0
    assert np.array_equal(random_orthogonal(4, 9), random_orthogonal(4, 9))
    with pytest.raises(ValueError):
        random_orthogonal(0, 1)


def test_same_orbit_pointcloud_cases(rng):
    V = rng.normal((3, 5))
    assert same_orbit_pointcloud(V, transform(V, random_orthogonal(3, 1), rng.permutation(5)), 1e-10)
    reflection = np.diag([-1.0, 1.0, 1.0])
    assert same_orbit_pointcloud(V, reflection @ V, 1e-12)
    # translation moves the Gram matrix: points (1,0), (0,1) vs shifted by (1,1)
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert not same_orbit_pointcloud(A, A + 1.0, 1e-12)
    with pytest.raises(ValueError):
        same_orbit_pointcloud(np.zeros((2, 3)), np.zeros((2, 4)))


def test_cloud_text_round_trip(rng):
    V = rng.normal((3, 11)) * 1e3
    assert np.array_equal(cloud_from_text(cloud_to_text(V)), V)


def test_cloud_text_errors():
    with pytest.raises(ParseError) as e:
        cloud_from_text("2\n1 2\n")
    assert e.value.line == 1
    with pytest.raises(ParseError) as e:
        cloud_from_text("2 2\n1 2\n1\n")
    assert e.value.line == 3
