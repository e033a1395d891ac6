"""Exception types shared across the package."""


class DyngpError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(DyngpError):
    """Operands do not conform (wrong shapes for the requested operation)."""


class DomainError(DyngpError):
    """An operation was evaluated outside its mathematical domain."""


class ContractError(DyngpError):
    """An API precondition was violated (e.g. non-scalar backward target)."""


class NotPositiveDefiniteError(DyngpError):
    """Cholesky factorization failed even after the jitter schedule.

    ``pivot_index`` is the 0-based index of the smallest failing pivot
    observed across all attempts.
    """

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class StabilityError(DyngpError):
    """A state matrix has an eigenvalue on or right of the imaginary axis."""


class SingularityError(DyngpError):
    """A system parameter makes a required division undefined (e.g. an
    eigenvalue exactly at zero in the zero-order-hold mean)."""


class GridError(DyngpError):
    """A time column is not a uniform grid; ``index`` is the first offender."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class IngestionError(DyngpError):
    """A data file could not be parsed; carries row/column context."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class CardinalityError(DyngpError):
    """A requested count is out of range (e.g. more inducing points than data)."""


class TrainingError(DyngpError):
    """Optimization aborted (non-finite objective or gradients)."""
