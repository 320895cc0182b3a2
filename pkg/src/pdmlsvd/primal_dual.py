"""Primal and dual formulations of the MLSVD for tensors of any order D.

Primal problem
    Given features ``Phi_d`` (``N_d x M_d``), a compatibility tensor ``C``
    (``M_1 x ... x M_D``) and a core ``S`` (``R_1 x ... x R_D``), maximize

        J = 1/2 sum_d tr(E_d (S_(d) S_(d)^T)^-1 E_d^T)
            - (D-1) vec(C)^T (W_D kron ... kron W_1) vec(S)
            + (D-2)/2 vec(C)^T (G_D kron ... kron G_1) vec(C)

    with ``G_d = Phi_d^T Phi_d`` subject to
    ``E_d = Phi_d C_(d) (kron_{e != d} W_e) S_(d)^T``.

Dual problem
    The MLSVD of the kernel tensor ``K = C x_1 Phi_1 ... x_D Phi_D``; the
    Lagrange multipliers ``U_d`` are its factor matrices.

The two are linked by ``W_d = Phi_d^T U_d`` and ``E_d = U_d S_(d) S_(d)^T``.

Solvers return the core of K's MLSVD; a problem's ``reg_core`` is only read
when evaluating the objective or the optimality conditions of a candidate
model. Use ``problem.with_core(model.core)`` to evaluate at a solver output.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .decomposition import RankSpec, gram_diagonality, mlsvd
from .errors import NonRealizableWeightsError, ShapeError, SingularCoreError
from .kernels import DEFAULT_BUDGET, kernel_tensor
from .linalg import DEFAULT_RANK_TOL, column_signs, pinv, psd_roots
from .tensor import as_matrix, as_tensor, frob, multi_mode_product, unfold

CORE_DIAGONALITY_TOL = 1e-8


def _tuple_of_matrices(ms, name: str) -> tuple[np.ndarray, ...]:
    return tuple(as_matrix(m, name) for m in ms)


@dataclass(frozen=True)
class PrimalProblem:
    """Features, compatibility tensor and (optionally) the regularization core."""

    features: tuple[np.ndarray, ...]
    compat: np.ndarray
    reg_core: np.ndarray | None = None

    def __post_init__(self):
        features = _tuple_of_matrices(self.features, "feature matrix")
        compat = as_tensor(self.compat, "compatibility tensor")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "compat", compat)
        if len(features) != compat.ndim:
            raise ShapeError(f"{len(features)} features for an order-{compat.ndim} compatibility tensor")
        for d, phi in enumerate(features):
            if phi.shape[1] != compat.shape[d]:
                raise ShapeError(
                    f"feature {d} has {phi.shape[1]} columns, compatibility mode {d} has size {compat.shape[d]}"
                )
        if self.reg_core is not None:
            core = as_tensor(self.reg_core, "regularization core")
            object.__setattr__(self, "reg_core", core)
            if core.ndim != compat.ndim:
                raise ShapeError(f"order-{core.ndim} core for an order-{compat.ndim} problem")
            for d, ratio in enumerate(gram_diagonality(core)):
                diag = np.diag(unfold(core, d) @ unfold(core, d).T)
                if ratio > CORE_DIAGONALITY_TOL or np.any(diag <= 0):
                    raise SingularCoreError(
                        f"core Gram matrix of mode {d} is not positive diagonal (off-diagonal ratio {ratio:.2e})"
                    )

    @property
    def order(self) -> int:
        return self.compat.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(phi.shape[0] for phi in self.features)

    @property
    def feature_dims(self) -> tuple[int, ...]:
        return self.compat.shape

    def with_core(self, core) -> "PrimalProblem":
        return replace(self, reg_core=core)

    def grams(self) -> list[np.ndarray]:
        return [phi.T @ phi for phi in self.features]

    def kernel(self, budget: int | None = DEFAULT_BUDGET) -> np.ndarray:
        return kernel_tensor(self.features, self.compat, budget)

    def kernel_norm_sq(self) -> float:
        """``||K||_F^2 = vec(C)^T (G_D kron ... kron G_1) vec(C)`` without forming ``K``."""
        return float(np.sum(self.compat * multi_mode_product(self.compat, self.grams())))

    def require_core(self) -> np.ndarray:
        if self.reg_core is None:
            raise SingularCoreError("problem has no regularization core; use with_core()")
        return self.reg_core


@dataclass(frozen=True)
class PrimalModel:
    """Weights ``W_d`` (``M_d x R_d``) and errors ``E_d`` (``N_d x R_d``)."""

    weights: tuple[np.ndarray, ...]
    errors: tuple[np.ndarray, ...]
    core: np.ndarray | None = None
    gram_ranks: tuple[int, ...] | None = None


@dataclass(frozen=True)
class DualModel:
    """Multipliers ``U_d`` (``N_d x R_d``), errors ``E_d`` and optionally ``K``."""

    multipliers: tuple[np.ndarray, ...]
    errors: tuple[np.ndarray, ...]
    kernel: np.ndarray | None = None
    core: np.ndarray | None = None

    def mode_gains(self, mode: int) -> np.ndarray:
        s = unfold(self.core, mode)
        return np.einsum("ij,ij->i", s, s)


def _check_weights(p: PrimalProblem, weights: Sequence[np.ndarray], core: np.ndarray) -> list[np.ndarray]:
    weights = [np.asarray(w, dtype=np.float64) for w in weights]
    if len(weights) != p.order:
        raise ShapeError(f"{len(weights)} weight matrices for an order-{p.order} problem")
    for d, w in enumerate(weights):
        if w.shape != (p.feature_dims[d], core.shape[d]):
            raise ShapeError(
                f"weight {d} has shape {w.shape}, expected {(p.feature_dims[d], core.shape[d])}"
            )
    return weights


def _coupled(t: np.ndarray, mats: Sequence[np.ndarray], core: np.ndarray, mode: int) -> np.ndarray:
    """``T_(d) (kron_{e != d} M_e) S_(d)^T`` with structured products."""
    contracted = multi_mode_product(t, mats, transpose=True, skip=mode)
    return unfold(contracted, mode) @ unfold(core, mode).T


def primal_errors(p: PrimalProblem, weights: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Representation (P): ``E_d = Phi_d C_(d) (kron_{e != d} W_e) S_(d)^T``.

    The compatibility side is contracted first (``M_d x R_d``), and ``Phi_d``
    applied last, which costs ``O(N M R)`` per mode.
    """
    core = p.require_core()
    weights = _check_weights(p, weights, core)
    return [p.features[d] @ _coupled(p.compat, weights, core, d) for d in range(p.order)]


def dual_errors(dm: DualModel, reg_core, problem: PrimalProblem | None = None) -> list[np.ndarray]:
    """Representation (D): ``E_d = K_(d) (kron_{e != d} U_e) S_(d)^T``.

    Uses ``dm.kernel`` when present; otherwise ``K`` is applied implicitly
    through the features and compatibility tensor of ``problem``.
    """
    core = as_tensor(reg_core, "regularization core")
    us = [np.asarray(u, dtype=np.float64) for u in dm.multipliers]
    if dm.kernel is not None:
        k = np.asarray(dm.kernel)
        if len(us) != k.ndim:
            raise ShapeError(f"{len(us)} multipliers for an order-{k.ndim} kernel")
        return [_coupled(k, us, core, d) for d in range(k.ndim)]
    if problem is None:
        raise ValueError("dual model has no kernel; pass the problem to apply it implicitly")
    projected = [phi.T @ u for phi, u in zip(problem.features, us)]
    return [problem.features[d] @ _coupled(problem.compat, projected, core, d) for d in range(problem.order)]


def _core_gram_inverse_trace(e: np.ndarray, core: np.ndarray, mode: int) -> float:
    s = unfold(core, mode)
    gram = s @ s.T
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise SingularCoreError(f"S_(d) S_(d)^T is singular for mode {mode}") from None
    half = np.linalg.solve(chol, e.T)
    return float(np.sum(half * half))


def objective_terms(p: PrimalProblem, weights: Sequence[np.ndarray], errors: Sequence[np.ndarray]) -> tuple[float, float, float]:
    """The three terms of J: variance, weight coupling and constant."""
    core = p.require_core()
    weights = _check_weights(p, weights, core)
    if len(errors) != p.order:
        raise ShapeError(f"{len(errors)} error matrices for an order-{p.order} problem")
    big_d = p.order
    variance = 0.5 * sum(
        _core_gram_inverse_trace(np.asarray(e, dtype=np.float64), core, d) for d, e in enumerate(errors)
    )
    coupling = (big_d - 1) * float(np.sum(multi_mode_product(p.compat, weights, transpose=True) * core))
    constant = 0.5 * (big_d - 2) * p.kernel_norm_sq()
    return variance, coupling, constant


def objective(p: PrimalProblem, weights: Sequence[np.ndarray], errors: Sequence[np.ndarray]) -> float:
    """Primal objective ``J`` for general order D."""
    variance, coupling, constant = objective_terms(p, weights, errors)
    return variance - coupling + constant


def solve_dual(p: PrimalProblem, spec: RankSpec | None = None, budget: int | None = DEFAULT_BUDGET) -> DualModel:
    """Solve through the dual: materialize ``K`` and take its MLSVD."""
    k = p.kernel(budget)
    f = mlsvd(k, spec)
    errors = tuple(u * f.mode_gains(d) for d, u in enumerate(f.factors))
    return DualModel(f.factors, errors, kernel=k, core=f.core)


def solve_primal(
    p: PrimalProblem,
    spec: RankSpec | None = None,
    gram_tol: float = DEFAULT_RANK_TOL,
    keep_kernel: bool = False,
    budget: int | None = DEFAULT_BUDGET,
) -> tuple[PrimalModel, DualModel]:
    """Solve in feature space without forming the kernel tensor.

    For each mode the dual factor spans the leading eigenvectors of
    ``K_(d) K_(d)^T = Phi_d A_d Phi_d^T`` with
    ``A_d = C_(d) (kron_{e != d} G_e) C_(d)^T``. Whitening with
    ``G_d^{-1/2}`` turns this into the symmetric PSD problem
    ``B_d = G_d^{1/2} A_d G_d^{1/2}``, whose eigenpairs are read off the SVD
    of its square-root factor ``(C x_e G_e^{1/2})_(d)`` (eigenvalues are the
    squared singular values). Then ``U_d = Phi_d G_d^{-1/2} V_d``,
    ``W_d = Phi_d^T U_d`` and the core is ``C x_d W_d^T``.

    Cost is ``O(N M^2)`` for the Gram matrices plus work on ``M``-sized
    tensors; memory never exceeds ``O(N M + M^D)``.
    """
    spec = spec or RankSpec()
    if spec.ranks is not None and len(spec.ranks) != p.order:
        raise ShapeError(f"{len(spec.ranks)} ranks given for an order-{p.order} problem")
    roots, inv_roots, ranks = [], [], []
    for d, g in enumerate(p.grams()):
        root, inv_root, rank = psd_roots(g, gram_tol)
        if rank < g.shape[0]:
            warnings.warn(
                f"Gram matrix of mode {d} has rank {rank} < {g.shape[0]}; whitening on its range",
                RuntimeWarning,
                stacklevel=2,
            )
        roots.append(root)
        inv_roots.append(inv_root)
        ranks.append(rank)
    whitened = multi_mode_product(p.compat, roots)
    us, ws = [], []
    for d, phi in enumerate(p.features):
        v = spec.select(d, unfold(whitened, d))
        u = phi @ (inv_roots[d] @ v)
        # Same sign convention as the dual path, so both return equal factors.
        u = u * column_signs(u)
        us.append(u)
        ws.append(phi.T @ u)
    core = multi_mode_product(p.compat, ws, transpose=True)
    solved = p.with_core(core)
    pm = PrimalModel(tuple(ws), tuple(primal_errors(solved, ws)), core=core, gram_ranks=tuple(ranks))
    gains = [np.einsum("ij,ij->i", unfold(core, d), unfold(core, d)) for d in range(p.order)]
    kernel = p.kernel(budget) if keep_kernel else None
    dm = DualModel(tuple(us), tuple(u * g for u, g in zip(us, gains)), kernel=kernel, core=core)
    return pm, dm


def _model_core(p: PrimalProblem, core) -> np.ndarray:
    return p.require_core() if core is None else core


def dual_to_primal(p: PrimalProblem, dm: DualModel) -> PrimalModel:
    """``W_d = Phi_d^T U_d``; errors recomputed with ``primal_errors``."""
    core = _model_core(p, dm.core)
    weights = tuple(phi.T @ np.asarray(u) for phi, u in zip(p.features, dm.multipliers))
    return PrimalModel(weights, tuple(primal_errors(p.with_core(core), weights)), core=core)


def primal_to_dual(p: PrimalProblem, pm: PrimalModel, tol: float = DEFAULT_RANK_TOL, realizable_tol: float = 1e-8) -> DualModel:
    """``U_d = Phi_d pinv(G_d) W_d``; errors recomputed with ``dual_errors``.

    Raises ``NonRealizableWeightsError`` when some ``W_d`` has a component
    outside ``range(Phi_d^T)`` larger than ``realizable_tol`` (relative).
    """
    core = _model_core(p, pm.core)
    us = []
    for d, (phi, w) in enumerate(zip(p.features, pm.weights)):
        w = np.asarray(w, dtype=np.float64)
        g = phi.T @ phi
        g_pinv = pinv(g, tol)
        outside = frob(w - g @ (g_pinv @ w))
        if outside > realizable_tol * max(frob(w), np.finfo(float).tiny):
            raise NonRealizableWeightsError(
                f"weights of mode {d} leave the row space of the features (residual {outside:.2e})"
            )
        us.append(phi @ (g_pinv @ w))
    dm = DualModel(tuple(us), (), core=core)
    return replace(dm, errors=tuple(dual_errors(dm, core, p)))


def _relative(lhs: np.ndarray, rhs: np.ndarray) -> float:
    scale = frob(lhs)
    diff = frob(lhs - rhs)
    return diff / scale if scale > 0 else diff


def kkt_residuals(p: PrimalProblem, pm: PrimalModel, dm: DualModel) -> dict[str, float]:
    """Relative residual of every KKT equation, keyed ``<kind>.mode<d>`` (1-based).

    ``stationarity``: ``(D-1) C_(d) (kron W) S_(d)^T`` against the sum of the
    ``D-1`` terms where one ``W_e`` is replaced by ``Phi_e^T U_e``.
    ``error``: ``E_d = U_d S_(d) S_(d)^T``.
    ``constraint``: ``E_d = Phi_d C_(d) (kron W) S_(d)^T``.
    Each is normalized by the norm of its left side (absolute when that is 0).
    """
    core = p.reg_core if p.reg_core is not None else _model_core(p, pm.core if pm.core is not None else dm.core)
    weights = _check_weights(p, pm.weights, core)
    projected = [phi.T @ np.asarray(u) for phi, u in zip(p.features, dm.multipliers)]
    big_d = p.order
    out = {}
    for d in range(big_d):
        lhs = (big_d - 1) * _coupled(p.compat, weights, core, d)
        rhs = np.zeros_like(lhs)
        for j in range(big_d):
            if j == d:
                continue
            mixed = [projected[e] if e == j else weights[e] for e in range(big_d)]
            rhs += _coupled(p.compat, mixed, core, d)
        out[f"stationarity.mode{d + 1}"] = _relative(lhs, rhs)
    constrained = primal_errors(p.with_core(core), weights)
    for d in range(big_d):
        e = np.asarray(pm.errors[d], dtype=np.float64)
        s = unfold(core, d)
        out[f"error.mode{d + 1}"] = _relative(e, np.asarray(dm.multipliers[d]) @ (s @ s.T))
        out[f"constraint.mode{d + 1}"] = _relative(e, constrained[d])
    return out


def implicit_lanczos_residuals(p: PrimalProblem, dm: DualModel) -> list[float]:
    """Lanczos residuals of ``dm`` against ``K`` without forming ``K``.

    ``K_(d) (kron_{e != d} U_e) = Phi_d (C x_{e != d} (Phi_e^T U_e)^T)_(d)``;
    normalized by ``||K||_F``.
    """
    core = _model_core(p, dm.core)
    projected = [phi.T @ np.asarray(u) for phi, u in zip(p.features, dm.multipliers)]
    scale = np.sqrt(max(p.kernel_norm_sq(), 0.0)) or 1.0
    out = []
    for d, phi in enumerate(p.features):
        rhs = phi @ unfold(multi_mode_product(p.compat, projected, transpose=True, skip=d), d)
        out.append(frob(np.asarray(dm.multipliers[d]) @ unfold(core, d) - rhs) / scale)
    return out


def implicit_reconstruction_error(p: PrimalProblem, dm: DualModel) -> float:
    """``||K - K x_1 P_1 ... x_D P_D||_F / ||K||_F`` with ``P_d = U_d U_d^T``, without forming ``K``.

    The error splits into the mutually orthogonal pieces
    ``K x_{e<d} P_e x_d (I - P_d)``. Each is evaluated through small Gram
    matrices, and ``(I - P_d) Phi_d`` is formed explicitly so that tiny
    errors are not lost to cancellation.
    """
    us = [np.asarray(u, dtype=np.float64) for u in dm.multipliers]
    grams = p.grams()
    kept = [w @ w.T for w in (phi.T @ u for phi, u in zip(p.features, us))]
    total = 0.0
    for d, (phi, u) in enumerate(zip(p.features, us)):
        rest = phi - u @ (u.T @ phi)
        mats = kept[:d] + [rest.T @ rest] + grams[d + 1:]
        total += float(np.sum(p.compat * multi_mode_product(p.compat, mats)))
    norm_sq = p.kernel_norm_sq()
    return float(np.sqrt(max(total, 0.0) / norm_sq)) if norm_sq > 0 else 0.0
