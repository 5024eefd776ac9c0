"""Exception types raised across the package."""


class NlsSteerError(Exception):
    """Base class for package errors."""


class ConfigError(NlsSteerError, ValueError):
    """Invalid or incomplete run configuration."""


class NoChainFound(NlsSteerError):
    """Targets are not reachable by elementary extensions inside the window."""


class SynthesisError(NlsSteerError):
    """An oscillatory profile could not be constructed."""


class NumericalFailure(NlsSteerError):
    """A time integration did not produce a trustworthy result."""


class BlowupDetected(NumericalFailure):
    """The Sobolev norm of the state exceeded the guard threshold."""


class ContractionFailure(NumericalFailure):
    """The Duhamel fixed-point iteration did not converge."""


class FrameConditioningError(NlsSteerError):
    """Truncated frame vectors are too far from orthonormal."""
