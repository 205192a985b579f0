"""Exception hierarchy shared across the package.

Each class carries the CLI exit code it maps to, so ``dsrc.cli`` can
translate failures without a lookup table.
"""


class DsrcError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(DsrcError, ValueError):
    """Invalid configuration value or missing configuration field."""

    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class ContractError(DsrcError, ValueError):
    """Inputs violate an operation's preconditions (shapes, ranges)."""

    exit_code = 2


class InsufficientDataError(ContractError):
    """Too few samples or time steps for the requested estimate."""


class GeometryError(ContractError):
    """Degenerate sensor/source geometry, e.g. coincident points."""


class NumericalError(DsrcError, ArithmeticError):
    """Base class for numerical failures."""

    exit_code = 3


class NotSpdError(NumericalError):
    """A matrix required to be symmetric positive-definite is not.

    ``pivot`` is the zero-based index of the first failing Cholesky pivot,
    or ``None`` when the failure was detected another way.
    """

    def __init__(self, message, pivot=None):
        self.pivot = pivot
        super().__init__(message)


class SolverFailure(NumericalError):
    """A recursive solver could not continue at time step ``step``."""

    def __init__(self, message, step):
        self.step = step
        super().__init__(f"step {step}: {message}")


class DegenerateSnrError(NumericalError):
    """Requested SNR cannot be met because the clean signal is zero."""


class CorruptError(DsrcError, IOError):
    """On-disk artifact is malformed, truncated or fails its checksum."""

    exit_code = 4

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SizeGuardError(ContractError):
    """Problem too large for a dense reference computation."""
