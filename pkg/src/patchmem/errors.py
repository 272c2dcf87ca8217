"""Exception taxonomy shared across the engine."""


class PatchmemError(Exception):
    """Base class for all engine errors."""


class InvalidInputError(PatchmemError):
    """An operation precondition was violated by caller-supplied data."""


class InvalidConfigError(PatchmemError):
    """A configuration value is missing, malformed, or out of range."""


class ContractViolationError(PatchmemError):
    """A component returned data that breaks its declared contract."""


class TransportError(PatchmemError):
    """A remote provider call failed at the transport level.

    ``retryable`` tells callers whether another attempt is worthwhile;
    ``attempts`` records how many were already made.
    """

    def __init__(self, message: str, *, retryable: bool = True, attempts: int = 1):
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


class BankFormatError(PatchmemError):
    """A memory-bank file is unreadable: bad magic, version, or checksum."""


class UndefinedMetricError(PatchmemError):
    """A metric is undefined for the given inputs (e.g. single-class labels)."""
