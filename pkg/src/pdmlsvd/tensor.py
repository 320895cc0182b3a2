"""Dense tensor primitives: unfoldings, vectorization, Kronecker and mode products.

Tensors are plain ``float64`` numpy arrays. Everything here follows the
column-major (first index fastest) convention, so that

    vectorize(t) == unfold(t, 0).ravel(order="F")

and a Tucker product ``S x_1 U_1 x_2 U_2 ... x_D U_D`` has vectorization
``kron_seq([U_D, ..., U_1]) @ vectorize(S)``.

Modes are 0-based axis indices, as in numpy.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError


def as_tensor(x, name: str = "tensor") -> np.ndarray:
    """Validate ``x`` as a dense real tensor and return it as float64.

    Raises ``TypeError`` for complex input, ``ShapeError`` for order-0 input
    or empty modes and ``NonFiniteError`` if any entry is NaN or Inf.
    """
    if np.iscomplexobj(x):
        raise TypeError(f"{name} must be real, got complex entries")
    t = np.asarray(x, dtype=np.float64)
    if t.ndim < 1:
        raise ShapeError(f"{name} must have order >= 1, got a scalar")
    if any(n < 1 for n in t.shape):
        raise ShapeError(f"{name} has an empty mode: shape {t.shape}")
    if not np.isfinite(t).all():
        raise NonFiniteError(f"{name} contains non-finite entries")
    return t


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    m = as_tensor(x, name)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be a matrix, got order {m.ndim}")
    return m


def _check_mode(ndim: int, mode: int) -> None:
    if not 0 <= mode < ndim:
        raise ShapeError(f"mode {mode} out of range for an order-{ndim} tensor")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding (Kolda convention).

    Rows index ``mode``; columns run over the remaining modes in increasing
    order with the smallest one varying fastest.
    """
    t = np.asarray(t)
    _check_mode(t.ndim, mode)
    return np.reshape(np.moveaxis(t, mode, 0), (t.shape[mode], -1), order="F")


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    shape = tuple(int(n) for n in shape)
    m = np.asarray(m)
    _check_mode(len(shape), mode)
    rest = shape[:mode] + shape[mode + 1:]
    if m.ndim != 2 or m.shape[0] != shape[mode] or m.shape[1] != int(np.prod(rest)):
        raise ShapeError(
            f"cannot fold a {m.shape} matrix along mode {mode} into shape {shape}"
        )
    return np.moveaxis(np.reshape(m, (shape[mode],) + rest, order="F"), 0, mode)


def vectorize(t: np.ndarray) -> np.ndarray:
    """Column-major flattening."""
    return np.reshape(np.asarray(t), -1, order="F")


def devectorize(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    v = np.asarray(v)
    shape = tuple(int(n) for n in shape)
    if v.ndim != 1 or v.size != int(np.prod(shape)):
        raise ShapeError(f"vector of length {v.size} does not fit shape {shape}")
    return np.reshape(v, shape, order="F")


def kron_seq(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """``A_1 kron A_2 kron ... kron A_q`` in the written order.

    Materializes the full product, so it is meant for small operands and
    test oracles only.
    """
    if len(matrices) == 0:
        raise ShapeError("kron_seq needs at least one matrix")
    return reduce(np.kron, [np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in matrices])


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Multiply ``t`` along ``mode`` by the matrix ``m``.

    ``unfold(result, mode) == m @ unfold(t, mode)``; the size of ``mode``
    becomes ``m.shape[0]``.
    """
    t = np.asarray(t)
    m = np.asarray(m)
    _check_mode(t.ndim, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ShapeError(
            f"matrix of shape {m.shape} cannot act on mode {mode} of size {t.shape[mode]}"
        )
    return np.moveaxis(np.tensordot(m, t, axes=(1, mode)), 0, mode)


def multi_mode_product(
    t: np.ndarray,
    matrices: Sequence[np.ndarray | None],
    transpose: bool = False,
    skip: int | None = None,
) -> np.ndarray:
    """Apply ``matrices[d]`` on every mode ``d``.

    Entries that are ``None`` and the mode ``skip`` are left untouched. With
    ``transpose=True`` each matrix is applied transposed, which is how a
    core is obtained from a tensor and its factor matrices.
    """
    t = np.asarray(t)
    if len(matrices) != t.ndim:
        raise ShapeError(f"expected {t.ndim} matrices, got {len(matrices)}")
    out = t
    for d, m in enumerate(matrices):
        if m is None or d == skip:
            continue
        out = mode_product(out, m.T if transpose else m, d)
    return out


def frob(x) -> float:
    return float(np.linalg.norm(np.ravel(x)))
