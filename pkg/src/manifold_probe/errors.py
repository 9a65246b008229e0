"""Exception hierarchy shared across the package."""


class ManifoldProbeError(Exception):
    """Base class for all package errors."""


class FormatError(ManifoldProbeError):
    """Malformed or inconsistent embedding/projector file content."""


class DataError(ManifoldProbeError):
    """Input data violates an operation's preconditions."""


class InsufficientDataError(DataError):
    """Not enough classes or samples to satisfy a sampling request."""


class NumericalError(ManifoldProbeError):
    """A numerical routine failed in a way that invalidates its output."""
