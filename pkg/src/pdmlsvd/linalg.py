"""Dense factorizations and structured solvers.

LAPACK (through numpy) does the heavy lifting; this module adds numerical
rank truncation, a deterministic sign convention and the Kronecker
structured minimum-norm least-squares solve.

Sign convention: in every returned orthonormal column, the entry of largest
magnitude is positive (ties go to the lowest row index).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import IndefiniteError, NotSymmetricError, ShapeError
from .tensor import as_matrix, devectorize, mode_product, vectorize

DEFAULT_RANK_TOL = 1e-12


@dataclass(frozen=True)
class ThinSvd:
    """Compact SVD ``a = u @ diag(s) @ v.T`` with ``s`` descending."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.s.size

    def matrix(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def column_signs(u: np.ndarray) -> np.ndarray:
    """Signs that make the largest-magnitude entry of each column positive."""
    if u.shape[1] == 0:
        return np.ones(0)
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def thin_svd(a, rank_tol: float | None = DEFAULT_RANK_TOL) -> ThinSvd:
    """Compact SVD truncated at the numerical rank.

    Singular values ``s_i <= rank_tol * s_1`` are dropped; ``rank_tol=None``
    keeps all ``min(a.shape)`` of them, zeros included.
    """
    a = as_matrix(a)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if rank_tol is not None:
        r = int(np.count_nonzero(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
        u, s, vt = u[:, :r], s[:r], vt[:r]
    signs = column_signs(u)
    return ThinSvd(u * signs, s.copy(), vt.T * signs)


def _check_symmetric(a: np.ndarray, tol: float) -> None:
    if a.shape[0] != a.shape[1]:
        raise NotSymmetricError(f"matrix of shape {a.shape} is not square")
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > tol * scale:
        raise NotSymmetricError("matrix is not symmetric within tolerance")


def sym_eig(a, sym_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns ``(vectors, values)`` with values in descending order and the
    package sign convention applied to the vectors.
    """
    a = as_matrix(a)
    _check_symmetric(a, sym_tol)
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    return v * column_signs(v), w


def pinv(a, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse, dropping singular values below ``tol * s_1``."""
    svd = thin_svd(a, rank_tol=tol)
    return (svd.v / svd.s) @ svd.u.T


def _psd_eig(g, tol: float) -> tuple[np.ndarray, np.ndarray]:
    v, w = sym_eig(g)
    top = max(abs(w[0]), abs(w[-1])) if w.size else 0.0
    if w.size and w[-1] < -1e-10 * top:
        raise IndefiniteError(f"matrix has negative eigenvalue {w[-1]:.3e}")
    keep = w > tol * top if top > 0 else np.zeros(w.size, dtype=bool)
    return w[keep], v[:, keep]


def psd_sqrt_inv(g, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Inverse square root of a PSD matrix restricted to its range.

    Eigenvalues below ``tol * lambda_max`` count as zero, so
    ``r @ g @ r`` is the orthogonal projector onto ``range(g)``.
    """
    w, v = _psd_eig(g, tol)
    return (v / np.sqrt(w)) @ v.T


def psd_roots(g, tol: float = DEFAULT_RANK_TOL) -> tuple[np.ndarray, np.ndarray, int]:
    """``(g^{1/2}, g^{-1/2}, rank)`` from one eigendecomposition."""
    w, v = _psd_eig(g, tol)
    root = np.sqrt(w)
    return (v * root) @ v.T, (v / root) @ v.T, w.size


def kron_matvec(factors: Sequence[np.ndarray], x: np.ndarray) -> np.ndarray:
    """``kron_seq(factors) @ x`` without forming the Kronecker product."""
    factors = [np.asarray(f, dtype=np.float64) for f in factors]
    cols = [f.shape[1] for f in factors]
    if x.size != int(np.prod(cols)):
        raise ShapeError(
            f"vector of length {x.size} does not match Kronecker column count {int(np.prod(cols))}"
        )
    # The last factor acts on the fastest index, i.e. mode 0.
    t = devectorize(np.asarray(x, dtype=np.float64), cols[::-1])
    for mode, f in enumerate(reversed(factors)):
        t = mode_product(t, f, mode)
    return vectorize(t)


def min_norm_lstsq_kron(
    factors: Sequence[np.ndarray], b, tol: float = DEFAULT_RANK_TOL
) -> tuple[np.ndarray, float]:
    """Minimum-norm least-squares solution of ``(A_1 kron ... kron A_q) x = b``.

    Uses ``pinv(A_1 kron ... kron A_q) = pinv(A_1) kron ... kron pinv(A_q)``
    applied mode by mode, so no Kronecker product is ever formed.

    Returns
    -------
    x : ndarray
        Solution vector of length ``prod(cols(A_i))``.
    residual : float
        ``||(A_1 kron ... kron A_q) x - b||_2``.
    """
    if len(factors) == 0:
        raise ShapeError("need at least one factor")
    factors = [as_matrix(f, "factor") for f in factors]
    b = np.asarray(b, dtype=np.float64).ravel()
    rows = [f.shape[0] for f in factors]
    if b.size != int(np.prod(rows)):
        raise ShapeError(
            f"right-hand side of length {b.size} does not match Kronecker row count {int(np.prod(rows))}"
        )
    x = kron_matvec([pinv(f, tol) for f in factors], b)
    residual = float(np.linalg.norm(kron_matvec(factors, x) - b))
    return x, residual


def projector_distance(u: np.ndarray, v: np.ndarray) -> float:
    """``||u u^T - v v^T||_F`` for matrices with orthonormal columns.

    Evaluated as ``sqrt(||u - v v^T u||^2 + ||v - u u^T v||^2)`` so that it
    never forms an ``N x N`` matrix and stays accurate for tiny distances.
    """
    du = u - v @ (v.T @ u)
    dv = v - u @ (u.T @ v)
    return float(np.sqrt(np.sum(du * du) + np.sum(dv * dv)))
