"""Reductions of the primal-dual MLSVD: kernel SVD, kernel PCA and
higher-order kernel PCA with a supersymmetric coupling."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .decomposition import RankSpec, mlsvd
from .errors import IndefiniteError, NotSymmetricError, RankError
from .kernels import DEFAULT_BUDGET, kernel_tensor
from .linalg import projector_distance, sym_eig, thin_svd
from .tensor import as_matrix, as_tensor, frob, mode_product, multi_mode_product, unfold

SYMMETRY_BREAK_TOL = 1e-6


@dataclass(frozen=True)
class KsvdResult:
    u1: np.ndarray
    s: np.ndarray
    u2: np.ndarray
    shifted_residuals: tuple[float, float]


def ksvd(k, rank: int) -> KsvdResult:
    """Kernel SVD from the shifted eigenvalue problems
    ``U1 S = K U2`` and ``U2 S^T = K^T U1``.

    ``K`` may be asymmetric and indefinite.
    """
    k = as_matrix(k, "kernel matrix")
    if not 1 <= rank <= min(k.shape):
        raise RankError(f"rank {rank} not in [1, {min(k.shape)}]")
    svd = thin_svd(k, rank_tol=None)
    u1, s, u2 = svd.u[:, :rank], np.diag(svd.s[:rank]), svd.v[:, :rank]
    scale = frob(k) or 1.0
    residuals = (frob(u1 @ s - k @ u2) / scale, frob(u2 @ s.T - k.T @ u1) / scale)
    return KsvdResult(u1, s, u2, residuals)


def kpca(k, rank: int, sym_tol: float = 1e-10, psd_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Kernel PCA: the truncated eigendecomposition ``K = U S U^T``.

    Returns ``(u, s)`` with ``s`` the leading eigenvalues. Rejects
    asymmetric or indefinite kernels instead of clipping them.
    """
    k = as_matrix(k, "kernel matrix")
    if not 1 <= rank <= k.shape[0]:
        raise RankError(f"rank {rank} not in [1, {k.shape[0]}]")
    vectors, values = sym_eig(k, sym_tol)
    if values[-1] < -psd_tol * max(abs(values[0]), abs(values[-1])):
        raise IndefiniteError(f"kernel has negative eigenvalue {values[-1]:.3e}")
    return vectors[:, :rank], values[:rank]


def supersymmetry_defect(t) -> float:
    """Largest relative deviation of ``t`` from any of its index permutations."""
    t = np.asarray(t, dtype=np.float64)
    scale = frob(t) or 1.0
    if len(set(t.shape)) > 1:
        return np.inf
    return max(
        (frob(t - np.transpose(t, perm)) / scale for perm in itertools.permutations(range(t.ndim))),
        default=0.0,
    )


@dataclass(frozen=True)
class HigherOrderKpcaResult:
    """Common factor ``u``, the core and the symmetry diagnostics.

    ``discrepancy`` is ``max_d ||U_d U_d^T - U_1 U_1^T||_F``; ``unfolding_gap``
    the largest difference between the kernel's mode unfoldings;
    ``residual`` the relative residual of ``U S_(1) = K_(1) (U kron ... kron U)``.
    """

    u: np.ndarray
    core: np.ndarray
    discrepancy: float
    unfolding_gap: float
    residual: float
    kernel: np.ndarray

    @property
    def symmetric(self) -> bool:
        return self.discrepancy <= SYMMETRY_BREAK_TOL


def higher_order_kpca(
    phi,
    compat,
    rank: int | None = None,
    sym_tol: float = 1e-10,
    budget: int | None = DEFAULT_BUDGET,
) -> HigherOrderKpcaResult:
    """Higher-order KPCA: identical features on every mode and a supersymmetric ``C``.

    The factor signs of every mode are aligned with mode 1 before comparing.
    A discrepancy above ``SYMMETRY_BREAK_TOL`` (degenerate spectrum) is
    reported with a warning, not raised.
    """
    phi = as_matrix(phi, "feature matrix")
    compat = as_tensor(compat, "compatibility tensor")
    order = compat.ndim
    defect = supersymmetry_defect(compat)
    if defect > sym_tol:
        raise NotSymmetricError(f"compatibility tensor is not supersymmetric (defect {defect:.2e})")
    k = kernel_tensor([phi] * order, compat, budget)
    k1 = unfold(k, 0)
    gap = max((frob(unfold(k, d) - k1) for d in range(1, order)), default=0.0)
    spec = RankSpec(ranks=(rank,) * order) if rank is not None else RankSpec()
    f = mlsvd(k, spec)
    u1 = f.factors[0]
    aligned = [u1]
    core = f.core
    for d in range(1, order):
        u = f.factors[d]
        r = min(u.shape[1], u1.shape[1])
        signs = np.ones(u.shape[1])
        signs[:r] = np.sign(np.einsum("ij,ij->j", u[:, :r], u1[:, :r]))
        signs[signs == 0] = 1.0
        aligned.append(u * signs)
        core = mode_product(core, np.diag(signs), d)
    discrepancy = max((projector_distance(u, u1) for u in aligned[1:]), default=0.0)
    if discrepancy > SYMMETRY_BREAK_TOL:
        warnings.warn(
            f"factor subspaces differ across modes by {discrepancy:.2e}; spectrum is likely degenerate",
            RuntimeWarning,
            stacklevel=2,
        )
    lhs = u1 @ unfold(core, 0)
    rhs = unfold(multi_mode_product(k, [None] + [u1] * (order - 1), transpose=True), 0)
    residual = frob(lhs - rhs) / (frob(k) or 1.0)
    return HigherOrderKpcaResult(u1, core, discrepancy, gap, residual, k)
