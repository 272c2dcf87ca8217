"""patchmem: zero-/few-shot visual anomaly detection over patch memory banks."""

__version__ = "0.1.0"

from . import kernels
from .errors import (
    BankFormatError,
    ContractViolationError,
    InvalidConfigError,
    InvalidInputError,
    PatchmemError,
    TransportError,
    UndefinedMetricError,
)

__all__ = [
    "__version__",
    "kernels",
    "PatchmemError",
    "InvalidInputError",
    "InvalidConfigError",
    "ContractViolationError",
    "TransportError",
    "BankFormatError",
    "UndefinedMetricError",
]
