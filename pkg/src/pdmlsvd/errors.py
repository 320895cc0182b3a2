"""Exception hierarchy shared by all modules."""


class MlsvdError(ValueError):
    """Base class for every error raised by this package."""


class ShapeError(MlsvdError):
    """Operands have inconsistent dimensions."""


class NonFiniteError(MlsvdError):
    """An input or result contains NaN or Inf."""


class RankError(MlsvdError):
    """A requested rank is not attainable for the given data."""


class NotSymmetricError(MlsvdError):
    """A matrix or tensor that must be (super)symmetric is not."""


class IndefiniteError(MlsvdError):
    """A matrix that must be positive semidefinite has a negative eigenvalue."""


class SingularCoreError(MlsvdError):
    """A core Gram matrix S_(d) S_(d)^T is singular and cannot be inverted."""


class BudgetExceededError(MlsvdError):
    """Materializing a tensor would exceed the configured entry budget."""


class NonRealizableWeightsError(MlsvdError):
    """Primal weights do not lie in the row space of the features."""


class KernelOverflowError(MlsvdError):
    """A kernel evaluation overflowed to Inf."""


class TensorFormatError(MlsvdError):
    """A tensor file has a bad magic number or malformed header."""


class LengthMismatchError(TensorFormatError):
    """A tensor file payload length disagrees with its header."""


class ManifestError(MlsvdError):
    """A factor directory manifest is missing or disagrees with its files."""


class ZeroTensorError(MlsvdError):
    """The operation is undefined for an all-zero tensor."""
