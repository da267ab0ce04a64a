"""Exception types raised by the streaming package."""


class StreamingError(Exception):
    """Base class for all simulator errors."""


class InvalidSampleError(StreamingError, ValueError):
    """Rate-distortion samples cannot determine a model."""


class DomainError(StreamingError, ValueError):
    """A numeric argument lies outside the function's domain."""


class NoEstimateError(StreamingError, RuntimeError):
    """No completed download is available to estimate throughput."""


class ConfigError(StreamingError, ValueError):
    """An experiment document failed validation.

    Args:
        issues: one message per violation, each prefixed with a JSON path
    """

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues) if self.issues else "invalid configuration")
