class CDTError(Exception):
    """Base class for every error raised by the transfer-matrix code."""
    exit_code = 1


class DomainError(CDTError, ValueError):
    """A parameter lies outside the region where an operation is defined."""
    exit_code = 2


class ConsistencyError(DomainError):
    """Strip, spin and boundary sizes do not fit together."""


class DivergenceError(DomainError):
    """A matrix series or trace diverges at the requested parameters."""


class BracketError(DomainError):
    """Root bracket does not contain a sign change."""


class ResourceError(CDTError):
    """A size cap (enumeration, truncation, tabulation) would be exceeded."""
    exit_code = 3


class NumericError(CDTError, ArithmeticError):
    """Iteration failed to converge or an internal invariant was violated."""
    exit_code = 5


IO_EXIT_CODE = 4


def exit_code_for(exc):
    if isinstance(exc, CDTError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return IO_EXIT_CODE
    return 1
