"""Exception types shared across the package.

Plain ``ValueError`` is used for ordinary invalid arguments; the classes here
mark conditions callers may want to handle separately.
"""


class PathcalcError(Exception):
    """Base class for package-specific errors."""


class NumericRangeError(PathcalcError):
    """A computation left the representable floating-point range."""


class OutsideDomainError(PathcalcError, ValueError):
    """An evaluation was requested outside the operation's domain."""


class ResolutionExhaustedError(PathcalcError):
    """A requested scale is finer than the discrete data can support."""


class UnsupportedModelError(PathcalcError, ValueError):
    """A model kind has no closed form registered for the operation."""


class SchemaError(PathcalcError):
    """A persisted artifact does not match the expected schema/version."""
