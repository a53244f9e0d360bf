"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`MosampleError`.  The CLI maps ``DataError`` to exit code 2 and
``ContractViolation`` (and its subclasses) to exit code 3.
"""


class MosampleError(Exception):
    """Base class for library errors."""


class DataError(MosampleError, ValueError):
    """Malformed or inadmissible input data (bad lines, duplicate keys, ...)."""

    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = tuple(lines)


class ContractViolation(MosampleError):
    """A documented precondition of an operation does not hold."""


class ParameterMismatch(ContractViolation):
    """Two samples cannot be combined because their parameters differ."""


class EmptySupportError(ContractViolation, ZeroDivisionError):
    """An objective has zero total mass, so pps probabilities are undefined."""


class CorruptSampleError(ContractViolation):
    """A sample carries impossible values, e.g. a sampled key with p == 0."""


class SolverContractError(ContractViolation):
    """The inner optimizer returned an answer outside its approximation contract."""
