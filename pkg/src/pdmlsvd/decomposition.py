"""Multilinear SVD (HOSVD) and the checks that certify it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankError, ShapeError, ZeroTensorError
from .linalg import DEFAULT_RANK_TOL, thin_svd
from .tensor import as_tensor, frob, multi_mode_product, unfold


@dataclass(frozen=True)
class RankSpec:
    """How many components to keep per mode.

    Give either explicit ``ranks`` or a relative energy threshold ``eps``;
    with neither, each mode keeps its numerical rank (singular values above
    ``rank_tol * s_1``).
    """

    ranks: tuple[int, ...] | None = None
    eps: float | None = None
    rank_tol: float = DEFAULT_RANK_TOL

    def __post_init__(self):
        if self.ranks is not None and self.eps is not None:
            raise ValueError("give either ranks or eps, not both")
        if self.ranks is not None:
            object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
            if any(r < 1 for r in self.ranks):
                raise RankError(f"ranks must be >= 1, got {self.ranks}")
        if self.eps is not None and not 0 < self.eps <= 1:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if self.rank_tol < 0:
            raise ValueError("rank_tol must be nonnegative")

    def select(self, mode: int, matrix: np.ndarray) -> np.ndarray:
        """Leading left singular vectors of ``matrix`` kept for ``mode``."""
        if self.ranks is not None:
            r = self.ranks[mode]
            if r > matrix.shape[0]:
                raise RankError(f"rank {r} exceeds size {matrix.shape[0]} of mode {mode}")
            svd = thin_svd(matrix, rank_tol=self.rank_tol)
            if r > svd.rank:
                raise RankError(
                    f"rank {r} exceeds the numerical rank {svd.rank} of mode {mode}"
                )
            return svd.u[:, :r]
        svd = thin_svd(matrix, rank_tol=self.rank_tol)
        if self.eps is None:
            return svd.u
        energy = np.cumsum(svd.s**2)
        r = int(np.searchsorted(energy, (1.0 - self.eps**2) * energy[-1])) + 1
        return svd.u[:, : min(r, svd.rank)]


@dataclass(frozen=True)
class MlsvdFactors:
    """Semi-orthogonal factors ``U_d`` (``N_d x R_d``) and core ``S`` (``R_1 x ... x R_D``)."""

    factors: tuple[np.ndarray, ...]
    core: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(np.asarray(u, dtype=np.float64) for u in self.factors))
        core = np.asarray(self.core, dtype=np.float64)
        object.__setattr__(self, "core", core)
        if len(self.factors) != core.ndim:
            raise ShapeError(f"{len(self.factors)} factors for an order-{core.ndim} core")
        for d, u in enumerate(self.factors):
            if u.ndim != 2 or u.shape[1] != core.shape[d]:
                raise ShapeError(
                    f"factor {d} has shape {u.shape}, core mode {d} has size {core.shape[d]}"
                )

    @property
    def order(self) -> int:
        return self.core.ndim

    @property
    def ranks(self) -> tuple[int, ...]:
        return self.core.shape

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(u.shape[0] for u in self.factors)

    def mode_gains(self, mode: int) -> np.ndarray:
        """Diagonal of ``S_(d) S_(d)^T``: the squared multilinear singular values."""
        s = unfold(self.core, mode)
        return np.einsum("ij,ij->i", s, s)


def mlsvd(t, spec: RankSpec | None = None) -> MlsvdFactors:
    """Multilinear SVD by one SVD per mode unfolding.

    ``U_d`` holds the leading left singular vectors of ``unfold(t, d)``; the
    core is ``t`` contracted with every ``U_d^T``. Truncation is the direct
    HOSVD projection with no iterative refinement.
    """
    t = as_tensor(t)
    spec = spec or RankSpec()
    if spec.ranks is not None and len(spec.ranks) != t.ndim:
        raise RankError(f"{len(spec.ranks)} ranks given for an order-{t.ndim} tensor")
    if not np.any(t):
        raise ZeroTensorError("the MLSVD of a zero tensor is undefined")
    factors = tuple(spec.select(d, unfold(t, d)) for d in range(t.ndim))
    core = multi_mode_product(t, factors, transpose=True)
    return MlsvdFactors(factors, core)


def reconstruct(f: MlsvdFactors) -> np.ndarray:
    return multi_mode_product(f.core, f.factors)


def _check_against(f: MlsvdFactors, t: np.ndarray) -> None:
    if f.shape != t.shape:
        raise ShapeError(f"factors describe shape {f.shape}, tensor has shape {t.shape}")


def lanczos_residuals(f: MlsvdFactors, t) -> list[float]:
    """Per-mode relative residuals of the coupled Lanczos equations.

    For mode ``d`` this is ``||U_d S_(d) - X_(d) (kron_{e != d} U_e)||_F / ||X||_F``
    with the Kronecker factors in descending mode order.
    """
    t = np.asarray(t, dtype=np.float64)
    _check_against(f, t)
    scale = frob(t) or 1.0
    out = []
    for d in range(t.ndim):
        lhs = f.factors[d] @ unfold(f.core, d)
        rhs = unfold(multi_mode_product(t, f.factors, transpose=True, skip=d), d)
        out.append(frob(lhs - rhs) / scale)
    return out


def semi_orthogonality(f: MlsvdFactors) -> list[float]:
    """``||U_d^T U_d - I||_F`` per mode."""
    return [frob(u.T @ u - np.eye(u.shape[1])) for u in f.factors]


def gram_diagonality(core) -> list[float]:
    """Off-diagonal mass ratio ``||offdiag(G_d)||_F / ||G_d||_F`` of each ``G_d = S_(d) S_(d)^T``."""
    core = np.asarray(core, dtype=np.float64)
    ratios = []
    for d in range(core.ndim):
        s = unfold(core, d)
        g = s @ s.T
        total = frob(g)
        off = frob(g - np.diag(np.diag(g)))
        ratios.append(off / total if total > 0 else 0.0)
    return ratios


def superdiagonality(core) -> float:
    """Fraction of the squared Frobenius mass of ``core`` on its superdiagonal.

    A value of 1 means the decomposition is an orthogonal CPD.
    """
    core = np.asarray(core, dtype=np.float64)
    total = float(np.sum(core**2))
    if total == 0:
        return 0.0
    idx = np.arange(min(core.shape))
    diag = core[(idx,) * core.ndim]
    return float(np.sum(diag**2)) / total


def relative_error(approx, exact) -> float:
    exact = np.asarray(exact)
    return frob(np.asarray(approx) - exact) / (frob(exact) or 1.0)

