"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class CredentialError(PipelineError):
    """No usable API credential was found in the environment."""


class TransportError(PipelineError):
    """An HTTP request kept failing after the retry budget was exhausted."""


class ShortfallError(PipelineError):
    """A sampling pool is smaller than the requested sample size."""

    def __init__(self, message: str, *, pool: str = "", available: int = 0, requested: int = 0):
        super().__init__(message)
        self.pool = pool
        self.available = available
        self.requested = requested


class DegenerateSampleError(PipelineError):
    """A statistical test was handed a sample it is undefined for."""


class BackendUnavailableError(PipelineError):
    """A required processing backend (e.g. a POS tagger) is not installed."""


class DependencyError(PipelineError):
    """An upstream artifact is missing or stale."""

    def __init__(self, message: str, *, artifact: str = ""):
        super().__init__(message)
        self.artifact = artifact


class ConfigError(PipelineError):
    """The pipeline configuration file failed validation."""

    def __init__(self, message: str, *, path: str = ""):
        super().__init__(message)
        self.path = path


class SchemaError(PipelineError):
    """An artifact file does not match its expected schema."""
