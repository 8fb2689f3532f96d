"""Exception types shared across the package."""


class InvalidDimensionError(ValueError):
    """The spatial dimension is not 2 or 3."""


class OrientationError(ValueError):
    """A cell is degenerate or negatively oriented."""


class ShapeError(ValueError):
    """An array argument has an inconsistent shape or length."""


class DomainError(ValueError):
    """A reference coordinate lies outside the reference simplex."""


class UnsupportedOrderError(ValueError):
    """Requested quadrature order is not available."""


class MissingAuxiliaryError(ValueError):
    """A form requires auxiliary field data that was not supplied."""


class ConfigurationError(ValueError):
    """An execution-geometry parameter violates a device bound."""


class CapacityError(RuntimeError):
    """The shared-memory image exceeds the configured budget."""

    def __init__(self, message: str, required_bytes: int, limit_bytes: int):
        super().__init__(message)
        self.required_bytes = required_bytes
        self.limit_bytes = limit_bytes


class CodegenError(ValueError):
    """Kernel source generation is missing a required ingredient."""
