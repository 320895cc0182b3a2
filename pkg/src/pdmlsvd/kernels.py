"""Kernel tensors: the generic feature construction, compatibility solves and
the polynomial, exponential and elementwise kernel families.

A kernel tensor is ``K = C x_1 Phi_1 x_2 Phi_2 ... x_D Phi_D``, i.e.
``vec(K) = (Phi_D kron ... kron Phi_1) vec(C)``. It is always evaluated with
mode products; the Kronecker operator is never formed.

Why the linear compatibility equation is solvable
-------------------------------------------------
With features ``Phi_d = X_(d)`` the operator ``A = X_(D) kron ... kron X_(1)``
has range ``range(X_(D)) kron ... kron range(X_(1))``. Every column of
``X_(d)`` lies in ``range(X_(d))`` by definition, hence ``X`` is left
unchanged by the projector ``P_D kron ... kron P_1`` onto that range and
``vec(X)`` lies in ``range(A)``. The minimum-norm least-squares solution
``C = pinv(A) vec(X)`` is therefore exact. For ``D >= 3`` each ``X_(d)`` is
wide, ``A`` has a nontrivial null space and ``C`` is one of infinitely many
solutions; for ``D = 2`` it reduces to ``C = pinv(X)``.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import (
    BudgetExceededError,
    KernelOverflowError,
    NonFiniteError,
    ShapeError,
)
from .linalg import DEFAULT_RANK_TOL, min_norm_lstsq_kron
from .tensor import as_matrix, as_tensor, devectorize, mode_product, unfold, vectorize

DEFAULT_BUDGET = 10**8

ELEMENTWISE_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda x: x,
    "tanh": np.tanh,
    "sin": np.sin,
    "exp": np.exp,
    "square": np.square,
    "abs": np.abs,
    "sigmoid": special.expit,
    "relu": lambda x: np.maximum(x, 0.0),
}


def check_budget(shape: Sequence[int], budget: int | None, what: str = "kernel tensor") -> None:
    """Raise before allocating a tensor of ``shape`` with more than ``budget`` entries."""
    if budget is None:
        return
    size = 1
    for n in shape:
        size *= int(n)
    if size > budget:
        raise BudgetExceededError(
            f"{what} of shape {tuple(shape)} has {size} entries, budget is {budget}"
        )


def _check_features(features: Sequence[np.ndarray], compat_shape: Sequence[int]) -> list[np.ndarray]:
    features = [as_matrix(f, "feature matrix") for f in features]
    if len(features) != len(compat_shape):
        raise ShapeError(
            f"{len(features)} feature matrices for an order-{len(compat_shape)} compatibility tensor"
        )
    for d, (f, m) in enumerate(zip(features, compat_shape)):
        if f.shape[1] != m:
            raise ShapeError(f"feature {d} has {f.shape[1]} columns, compatibility mode {d} has size {m}")
    return features


def kernel_tensor(features: Sequence[np.ndarray], compat, budget: int | None = DEFAULT_BUDGET) -> np.ndarray:
    """``vec(K) = (Phi_D kron ... kron Phi_1) vec(C)`` by successive mode products."""
    compat = as_tensor(compat, "compatibility tensor")
    features = _check_features(features, compat.shape)
    check_budget([f.shape[0] for f in features], budget)
    # Shrinking modes first keeps intermediates small.
    order = sorted(range(compat.ndim), key=lambda d: features[d].shape[0] / features[d].shape[1])
    k = compat
    for d in order:
        k = mode_product(k, features[d], d)
    return k


def superdiagonal_identity(size: int, order: int) -> np.ndarray:
    """Order-``order`` tensor with ones on the superdiagonal. Small sizes only."""
    t = np.zeros((size,) * order)
    idx = np.arange(size)
    t[(idx,) * order] = 1.0
    return t


def linear_features(x) -> list[np.ndarray]:
    """Mode unfoldings of ``x``, used as features ``Phi_d = X_(d)``."""
    x = as_tensor(x)
    return [unfold(x, d) for d in range(x.ndim)]


def _min_norm_solve(x: np.ndarray, target: np.ndarray, tol: float, budget: int | None):
    unfoldings = linear_features(x)
    shape = [u.shape[1] for u in unfoldings]
    check_budget(shape, budget, "compatibility tensor")
    c, residual = min_norm_lstsq_kron(unfoldings[::-1], vectorize(target), tol)
    return devectorize(c, shape), residual


def min_norm_compatibility(
    x, tol: float = DEFAULT_RANK_TOL, budget: int | None = DEFAULT_BUDGET
) -> tuple[np.ndarray, float]:
    """Minimum-Frobenius-norm ``C`` with ``vec(X) = (X_(D) kron ... kron X_(1)) vec(C)``.

    ``C`` has shape ``(prod_{e != 1} N_e, ..., prod_{e != D} N_e)``. The
    returned residual is the 2-norm of the equation mismatch.
    """
    x = as_tensor(x)
    if not np.any(x):
        return np.zeros([u.shape[1] for u in linear_features(x)]), 0.0
    return _min_norm_solve(x, x, tol, budget)


def _check_inputs(inputs: Sequence[np.ndarray]) -> list[np.ndarray]:
    inputs = [as_matrix(x, "kernel input") for x in inputs]
    if not inputs:
        raise ShapeError("need at least one input matrix")
    widths = {x.shape[1] for x in inputs}
    if len(widths) != 1:
        raise ShapeError(f"kernel inputs must share the feature width, got widths {sorted(widths)}")
    return inputs


def _multilinear_inner(inputs: list[np.ndarray]) -> np.ndarray:
    """``K[i_1, ..., i_D] = sum_m prod_d X_d[i_d, m]``."""
    letters = string.ascii_letters.replace("z", "")
    if len(inputs) > len(letters):
        raise ShapeError(f"order {len(inputs)} is too large")
    subs = ",".join(f"{letters[d]}z" for d in range(len(inputs)))
    return np.einsum(f"{subs}->{letters[:len(inputs)]}", *inputs, optimize=True)


def polynomial_kernel(inputs: Sequence[np.ndarray], degree: int, budget: int | None = DEFAULT_BUDGET) -> np.ndarray:
    """Polynomial tensor kernel ``K[i_1..i_D] = (sum_m prod_d X_d[i_d, m])**degree``.

    The superdiagonal identity coupling is applied implicitly. Odd degrees
    give kernels that are not positive definite.
    """
    if int(degree) != degree or degree < 1:
        raise ValueError(f"degree must be an integer >= 1, got {degree}")
    inputs = _check_inputs(inputs)
    check_budget([x.shape[0] for x in inputs], budget)
    k = _multilinear_inner(inputs)
    return k if degree == 1 else k ** int(degree)


def exponential_kernel(inputs: Sequence[np.ndarray], budget: int | None = DEFAULT_BUDGET) -> np.ndarray:
    """Elementwise exponential of the degree-1 polynomial kernel."""
    lin = polynomial_kernel(inputs, 1, budget)
    with np.errstate(over="ignore"):
        k = np.exp(lin)
    if not np.isfinite(k).all():
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(k))[0])
        raise KernelOverflowError(f"exponential kernel overflows at index {bad} (argument {lin[bad]:.6g})")
    return k


def elementwise_kernel(
    x,
    f: Callable[[np.ndarray], np.ndarray],
    tol: float = DEFAULT_RANK_TOL,
    budget: int | None = DEFAULT_BUDGET,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Kernel ``K = f(X)`` with linear features and a least-squares coupling.

    Returns ``(K, C, residual)`` where ``C`` is the minimum-norm solution of
    ``vec(f(X)) = (X_(D) kron ... kron X_(1)) vec(C)``. The residual is not
    zero in general: ``f(X)`` need not lie in the span of the mode ranges of
    ``X``.
    """
    x = as_tensor(x)
    with np.errstate(all="ignore"):
        k = np.asarray(f(x), dtype=np.float64)
    if k.shape != x.shape:
        raise ShapeError(f"f changed the shape from {x.shape} to {k.shape}")
    if not np.isfinite(k).all():
        raise NonFiniteError("elementwise function produced non-finite values")
    if not np.any(x):
        return k, np.zeros([u.shape[1] for u in linear_features(x)]), float(np.linalg.norm(k))
    c, residual = _min_norm_solve(x, k, tol, budget)
    return k, c, residual


@dataclass(frozen=True)
class KernelSpec:
    """Selects one of the kernel constructions.

    ``variant`` is one of ``generic`` (``features`` + ``compat``), ``linear``
    (``data``), ``polynomial`` (``inputs`` + ``degree``), ``exponential``
    (``inputs``) or ``elementwise`` (``data`` + ``function``).
    """

    variant: str
    features: tuple[np.ndarray, ...] | None = None
    compat: np.ndarray | None = None
    data: np.ndarray | None = None
    inputs: tuple[np.ndarray, ...] | None = None
    degree: int = 1
    function: Callable[[np.ndarray], np.ndarray] | str | None = None

    VARIANTS = ("generic", "linear", "polynomial", "exponential", "elementwise")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        required = {
            "generic": ("features", "compat"),
            "linear": ("data",),
            "polynomial": ("inputs",),
            "exponential": ("inputs",),
            "elementwise": ("data", "function"),
        }[self.variant]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.variant} kernel needs {', '.join(missing)}")
        if self.variant == "polynomial" and (int(self.degree) != self.degree or self.degree < 1):
            raise ValueError(f"degree must be an integer >= 1, got {self.degree}")


def build_kernel(spec: KernelSpec, budget: int | None = DEFAULT_BUDGET) -> tuple[np.ndarray, np.ndarray | None, float | None]:
    """Evaluate ``spec``; returns ``(K, C, residual)`` with ``C``/``residual`` only where a solve happens."""
    if spec.variant == "generic":
        return kernel_tensor(spec.features, spec.compat, budget), None, None
    if spec.variant == "polynomial":
        return polynomial_kernel(spec.inputs, spec.degree, budget), None, None
    if spec.variant == "exponential":
        return exponential_kernel(spec.inputs, budget), None, None
    if spec.variant == "linear":
        x = as_tensor(spec.data)
        check_budget(x.shape, budget)
        c, residual = min_norm_compatibility(x, budget=budget)
        return kernel_tensor(linear_features(x), c, budget), c, residual
    f = spec.function
    if isinstance(f, str):
        try:
            f = ELEMENTWISE_FUNCTIONS[f]
        except KeyError:
            raise ValueError(f"unknown elementwise function {f!r}") from None
    check_budget(np.shape(spec.data), budget)
    return elementwise_kernel(spec.data, f, budget=budget)
