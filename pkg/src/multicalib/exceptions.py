"""Exception hierarchy shared across the package."""


class MulticalibError(Exception):
    """Base class for all package errors."""


class SchemaError(MulticalibError, ValueError):
    """Feature schema mismatch or malformed input file."""


class ConfigError(MulticalibError, ValueError):
    """Inconsistent generator, oracle or learner configuration."""


class DensityError(MulticalibError, ValueError):
    """A set in a collection is smaller than the declared density floor."""


class OracleError(MulticalibError):
    """An oracle could not answer a query."""


class EmptyIntersectionError(OracleError):
    """The queried set contains no labeled sample."""


class WindowError(OracleError, ValueError):
    """Query window below the oracle's declared minimum."""


class BudgetExhausted(OracleError):
    """The private oracle refuses further queries or answers."""


class GuardTripped(MulticalibError):
    """A learner exceeded its non-termination guard."""


class PreconditionError(MulticalibError):
    """An audited precondition of a check does not hold."""
