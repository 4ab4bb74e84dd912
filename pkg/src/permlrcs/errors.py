"""Exception and warning types shared across the package."""


class PermLrcsError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDimsError(PermLrcsError, ValueError):
    """Problem sizes violate a structural constraint (e.g. s does not divide m)."""


class ShapeMismatchError(PermLrcsError, ValueError):
    """An array argument has a shape inconsistent with the problem dimensions."""


class DegenerateInitError(PermLrcsError):
    """Spectral initialization received data it cannot work with (e.g. all-zero input)."""


class RankDeficientColumnError(PermLrcsError):
    """A per-column least-squares system was rank deficient at initialization."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"rank-deficient least-squares system for column {column}")


class QrDegeneracyError(PermLrcsError):
    """The matrix handed to the QR retraction was (numerically) rank deficient."""


class DegenerateInputError(PermLrcsError):
    """A quantity required to be nonzero/finite was zero or non-finite."""


class SolverError(PermLrcsError):
    """An iterative solver failed; message carries the iteration context."""


class RankDeficiencyWarning(UserWarning):
    """Warns about rank-deficient columns handled with a minimum-norm solve."""
