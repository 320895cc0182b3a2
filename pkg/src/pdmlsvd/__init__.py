"""Multilinear SVD through its primal-dual formulation."""
from .decomposition import (
    MlsvdFactors,
    RankSpec,
    gram_diagonality,
    lanczos_residuals,
    mlsvd,
    reconstruct,
    relative_error,
    semi_orthogonality,
    superdiagonality,
)
from .errors import (
    BudgetExceededError,
    IndefiniteError,
    KernelOverflowError,
    LengthMismatchError,
    ManifestError,
    MlsvdError,
    NonFiniteError,
    NonRealizableWeightsError,
    NotSymmetricError,
    RankError,
    ShapeError,
    SingularCoreError,
    TensorFormatError,
    ZeroTensorError,
)
from .fileio import read_factors, read_model, read_tensor, write_factors, write_model, write_tensor
from .kernels import (
    KernelSpec,
    build_kernel,
    elementwise_kernel,
    exponential_kernel,
    kernel_tensor,
    min_norm_compatibility,
    polynomial_kernel,
)
from .primal_dual import (
    DualModel,
    PrimalModel,
    PrimalProblem,
    dual_to_primal,
    kkt_residuals,
    objective,
    primal_to_dual,
    solve_dual,
    solve_primal,
)
from .special import higher_order_kpca, kpca, ksvd
from .tensor import fold, kron_seq, mode_product, unfold

__version__ = "0.1.0"
