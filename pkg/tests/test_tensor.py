import numpy as np
import pytest

from oracles import kron_all, tucker_kron, unfold_loop, vec_loop
from pdmlsvd.errors import NonFiniteError, ShapeError
from pdmlsvd.tensor import (
    as_tensor,
    devectorize,
    fold,
    kron_seq,
    mode_product,
    multi_mode_product,
    unfold,
    vectorize,
)


@pytest.fixture
def t8():
    return devectorize(np.arange(1.0, 9.0), (2, 2, 2))


def test_unfold_mode1_example(t8):
    expected = np.array([[1, 3, 5, 7], [2, 4, 6, 8]], dtype=float)
    np.testing.assert_array_equal(unfold(t8, 0), expected)
    np.testing.assert_array_equal(unfold_loop(t8, 0), expected)


def test_unfold_mode3_example(t8):
    expected = np.array([[1, 2, 3, 4], [5, 6, 7, 8]], dtype=float)
    np.testing.assert_array_equal(unfold(t8, 2), expected)
    np.testing.assert_array_equal(unfold_loop(t8, 2), expected)


def test_unfold_of_vector_is_column():
    v = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(unfold(v, 0), v[:, None])


@pytest.mark.parametrize("shape", [(3, 4, 2), (2, 3, 2, 3), (5,), (2, 1, 3, 1, 2)])
def test_unfold_matches_index_oracle(rng, shape):
    t = rng.standard_normal(shape)
    for d in range(t.ndim):
        np.testing.assert_array_equal(unfold(t, d), unfold_loop(t, d))


def test_unfold_bad_mode(t8):
    with pytest.raises(ShapeError):
        unfold(t8, 3)


def test_fold_examples(t8):
    for d in range(3):
        np.testing.assert_array_equal(vectorize(fold(unfold(t8, d), d, (2, 2, 2))), np.arange(1.0, 9.0))


def test_fold_random_round_trip(rng):
    r = rng.standard_normal((3, 4, 2))
    np.testing.assert_array_equal(fold(unfold(r, 1), 1, r.shape), r)


def test_fold_inconsistent():
    with pytest.raises(ShapeError):
        fold(np.zeros((2, 3)), 0, (2, 2, 2))


def test_vectorize_column_major():
    np.testing.assert_array_equal(vectorize(np.array([[1.0, 3.0], [2.0, 4.0]])), [1, 2, 3, 4])


def test_vectorize_round_trip():
    v = np.arange(1.0, 9.0)
    np.testing.assert_array_equal(vectorize(devectorize(v, (2, 2, 2))), v)


def test_vectorize_equals_vec_of_mode1_unfolding(rng):
    t = rng.standard_normal((3, 2, 4))
    np.testing.assert_array_equal(vectorize(t), vec_loop(t))
    np.testing.assert_array_equal(vectorize(t), unfold_loop(t, 0).ravel(order="F"))


def test_devectorize_length_mismatch():
    with pytest.raises(ShapeError):
        devectorize(np.arange(7.0), (2, 2, 2))


def test_kron_seq_block_diagonal():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    expected = np.array([[1, 2, 0, 0], [3, 4, 0, 0], [0, 0, 1, 2], [0, 0, 3, 4]], dtype=float)
    np.testing.assert_array_equal(kron_seq([np.eye(2), a]), expected)


def test_kron_seq_scalars():
    np.testing.assert_array_equal(kron_seq([[[2.0]], [[3.0]]]), [[6.0]])


def test_kron_seq_empty():
    with pytest.raises(ShapeError):
        kron_seq([])


def test_kron_mixed_product(rng):
    a, b, c, d = (rng.standard_normal((2, 2)) for _ in range(4))
    lhs = kron_seq([a, b]) @ kron_seq([c, d])
    np.testing.assert_allclose(lhs, kron_seq([a @ c, b @ d]), rtol=1e-12, atol=1e-12)


def test_kron_seq_associative_exact_on_integers(rng):
    a, b, c = (rng.integers(-9, 10, size=s).astype(float) for s in ((2, 3), (3, 2), (2, 2)))
    np.testing.assert_array_equal(kron_seq([a, b, c]), kron_seq([a, kron_seq([b, c])]))


def test_kron_seq_associative_to_rounding(rng):
    # Triple products round differently under regrouping; each side is within 1 ulp of exact.
    a, b, c = rng.standard_normal((2, 3)), rng.standard_normal((3, 2)), rng.standard_normal((2, 2))
    lhs, rhs = kron_seq([a, b, c]), kron_seq([a, kron_seq([b, c])])
    assert np.all(np.abs(lhs - rhs) <= 2 * np.spacing(np.abs(lhs)))


def test_mode_product_identity(rng):
    t = rng.standard_normal((3, 4, 2))
    for d in range(3):
        np.testing.assert_array_equal(mode_product(t, np.eye(t.shape[d]), d), t)


def test_mode_product_hand_example(t8):
    out = mode_product(t8, np.array([[1.0, 1.0]]), 0)
    assert out.shape == (1, 2, 2)
    np.testing.assert_array_equal(vectorize(out), [3, 7, 11, 15])


def test_mode_product_definition(rng):
    t = rng.standard_normal((3, 4, 2))
    m = rng.standard_normal((5, 4))
    np.testing.assert_allclose(unfold(mode_product(t, m, 1), 1), m @ unfold_loop(t, 1), rtol=1e-13)


def test_mode_product_order_independent(rng):
    t = rng.standard_normal((3, 4, 2))
    ms = [rng.standard_normal((2, 3)), rng.standard_normal((5, 4)), rng.standard_normal((3, 2))]
    ref = multi_mode_product(t, ms)
    for perm in [(2, 1, 0), (1, 0, 2), (0, 2, 1)]:
        out = t
        for d in perm:
            out = mode_product(out, ms[d], d)
        np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_mode_product_dimension_mismatch(rng):
    with pytest.raises(ShapeError):
        mode_product(rng.standard_normal((3, 4)), np.eye(3), 1)


def test_vec_consistency_with_kron(rng):
    s = rng.standard_normal((2, 3, 4))
    us = [rng.standard_normal((n, r)) for n, r in zip((4, 2, 3), s.shape)]
    structured = multi_mode_product(s, us)
    oracle = tucker_kron(s, us)
    assert np.linalg.norm(structured - oracle) <= 1e-12 * np.linalg.norm(oracle)
    np.testing.assert_allclose(kron_seq(us[::-1]), kron_all(us[::-1]))


def test_as_tensor_validation():
    with pytest.raises(ShapeError):
        as_tensor(3.0)
    with pytest.raises(ShapeError):
        as_tensor(np.zeros((2, 0)))
    with pytest.raises(NonFiniteError):
        as_tensor([1.0, np.nan])


def test_complex_input_rejected():
    with pytest.raises(TypeError):
        as_tensor(np.ones((2, 2)) + 1j)
