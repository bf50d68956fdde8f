"""Exception types raised by greenpt."""


class GreenPTError(Exception):
    """Base class for all library errors."""


class OperatorError(GreenPTError):
    """Invalid operator construction (bad kind, dimension mismatch, non-Hermitian)."""


class SingularEnergyError(GreenPTError):
    """Evaluation at a declared singular point, an unremoved pole, or a singular solve."""


class DerivativeOrderError(GreenPTError):
    """Requested derivative order is outside the supported range."""


class RootRefinementError(GreenPTError):
    """A bracketed root could not be refined to tolerance."""


class ResidueNormalizationError(GreenPTError):
    """The residue metric <phi|dA/dE|phi> is not positive, so the pole cannot be normalized."""


class DecompositionError(GreenPTError):
    """A pole decomposition was requested under unmet preconditions."""


class ConvergenceError(GreenPTError):
    """An iteration left its window or a series diverged."""


class PreconditionError(GreenPTError):
    """A solver was called on a problem it does not support."""


class ConfigError(GreenPTError):
    """Invalid run configuration."""
