"""Exception types shared across the package."""


class CapTalkError(Exception):
    """Base class for all captalk errors."""


class ShapeError(CapTalkError):
    """Tensor or array shapes are incompatible with the requested operation."""


class DomainError(CapTalkError):
    """Input outside the mathematical domain of an operation (log/sqrt of a negative)."""


class NumericError(CapTalkError):
    """A computation produced NaN or Inf."""


class FormatError(CapTalkError):
    """A file or byte stream does not match its declared format."""


class ConfigError(CapTalkError):
    """Configurations are invalid or mutually incompatible (e.g. checkpoint mismatch)."""


class StateError(CapTalkError):
    """An operation was called with required state missing."""
