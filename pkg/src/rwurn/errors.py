"""Exception types. Each maps to a CLI exit code."""


class RwurnError(Exception):
    exit_code = 1


class ConfigError(RwurnError, ValueError):
    exit_code = 2


class DomainError(RwurnError, ValueError):
    """Raised when an oracle is evaluated where its closed form is unusable."""

    exit_code = 3


class UnsupportedOperation(DomainError):
    """Offset law has no closed-form characteristic function or moments."""


class NodeCapExceeded(RwurnError, MemoryError):
    exit_code = 4
