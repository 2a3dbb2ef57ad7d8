"""Exception taxonomy shared by every latentcheck module.

The CLI maps these onto exit codes: usage-style errors exit 1, data/format
errors exit 2, numeric failures exit 3.
"""


class LatentCheckError(Exception):
    """Base class for all latentcheck errors."""


class DimensionError(LatentCheckError, ValueError):
    """Array shape does not match what an operation requires."""


class ParameterError(LatentCheckError, ValueError):
    """Invalid parameter value (e.g. k < 2, t out of range, bad latent dim)."""


class ConditioningError(LatentCheckError, ValueError):
    """Class label missing, unexpected, or out of range for a conditional model."""


class DomainError(LatentCheckError, ValueError):
    """Input values outside the documented domain (e.g. pixels not in [0, 1])."""


class ConfigError(LatentCheckError, ValueError):
    """Mismatched artifacts (wrong encoder for a grid, profile for another net, ...)."""


class InputError(LatentCheckError, ValueError):
    """Empty or otherwise unusable dataset."""


class StateError(LatentCheckError, RuntimeError):
    """Operation called out of order (e.g. backward without a forward trace)."""


class NumericFailure(LatentCheckError, RuntimeError):
    """NaN/Inf appeared in a computation; carries context about where."""


class FormatError(LatentCheckError, ValueError):
    """Persisted artifact is malformed: bad magic, version, dims, or payload."""


class AssociationUndefined(LatentCheckError, ValueError):
    """Cramer's V is undefined: contingency table degenerates to one row/column."""
