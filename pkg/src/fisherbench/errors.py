"""Exception hierarchy shared across the package."""


class FisherBenchError(Exception):
    """Base class for all library errors."""


class DomainError(FisherBenchError, ValueError):
    """A parameter or observation lies outside the admissible domain."""


class SingularityError(DomainError):
    """A coordinate in a denominator position is (numerically) zero."""


class DegenerateModelError(DomainError):
    """The model has no free parameters."""


class PreconditionError(DomainError):
    """A stated precondition of a bound does not hold.

    ``limit`` carries the maximal admissible value when one exists.
    """

    def __init__(self, message, limit=None):
        super().__init__(message)
        self.limit = limit


class UnsupportedCaseError(FisherBenchError):
    """No bound or scheme is available for the requested combination."""


class CapacityError(FisherBenchError):
    """A finite alphabet is too large to enumerate."""


class ConstraintViolation(FisherBenchError):
    """A channel does not satisfy its claimed b-bit or LDP constraint."""


class ProtocolError(FisherBenchError):
    """A protocol run failed; ``client`` names the offending client index."""

    def __init__(self, message, client=None):
        super().__init__(message)
        self.client = client
