"""Exception hierarchy shared across the package.

Every error raised by the library derives from MatloopError, with a stable
machine-readable ``code`` used by the API layer and CLI to map failures onto
wire statuses and exit codes.
"""

from __future__ import annotations


class MatloopError(Exception):
    """Base class for all library errors."""

    code = "internal"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context


class InvalidTemplateError(MatloopError):
    code = "invalid-template"


class DuplicateNameError(MatloopError):
    code = "duplicate-name"


class TableMissingError(MatloopError):
    code = "table-missing"


class UnknownColumnError(MatloopError):
    code = "unknown-column"


class UnknownFieldError(MatloopError):
    code = "unknown-field"


class MalformedFilterError(MatloopError):
    code = "malformed-filter"


class ValidationNotRunError(MatloopError):
    code = "validation-not-run"


class RecordRejectedError(MatloopError):
    """Raised when an ingest is attempted with outstanding rule violations."""

    code = "rule-violation"

    def __init__(self, message: str, violations=None, **context):
        super().__init__(message, **context)
        self.violations = list(violations or [])


class UnknownUnitError(MatloopError):
    code = "unknown-unit"


class IncompatibleDimensionError(MatloopError):
    code = "incompatible-dimension"


class NonFiniteInputError(MatloopError):
    code = "non-finite-input"


class DimensionMismatchError(MatloopError):
    code = "dimension-mismatch"


class NotPositiveDefiniteError(MatloopError):
    """Covariance factorization failed even at the jitter ceiling."""

    code = "non-positive-definite"


class EmptyArchiveError(MatloopError):
    code = "empty-archive"


class InvalidRefPointError(MatloopError):
    code = "invalid-ref-point"


class UnknownBenchmarkError(MatloopError):
    code = "unknown-name"


class OutOfBoundsError(MatloopError):
    code = "out-of-bounds"


class UnknownFidelityError(MatloopError):
    code = "unknown-fidelity"


class ConfigError(MatloopError):
    code = "bad-config"


class CampaignStateError(MatloopError):
    """Operation attempted in a phase that forbids it."""

    code = "bad-phase"


class UnknownProposalError(MatloopError):
    code = "unknown-proposal"


class AlreadyMeasuredError(MatloopError):
    code = "already-measured"


class ArityMismatchError(MatloopError):
    code = "arity-mismatch"


class AllMissingError(MatloopError):
    """Imputation impossible: every value in a required column is missing."""

    code = "all-missing"


class EmptyLogError(MatloopError):
    code = "empty-log"
