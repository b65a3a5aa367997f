"""Exception hierarchy shared across the package."""


class IcbError(Exception):
    """Base class for all package errors."""


class ConfigurationError(IcbError):
    """A config object or CLI invocation is malformed."""


class DomainError(IcbError, ValueError):
    """An argument falls outside the mathematical domain of an operation."""


class GenerationError(IcbError):
    """Synthetic data generation failed (e.g. retry cap exhausted)."""


class TrainingError(IcbError):
    """Training diverged or could not proceed."""


class SolverError(IcbError):
    """ODE integration failed (step underflow or budget exhausted)."""


class SamplerError(IcbError):
    """A reference sampler failed (e.g. every proposal diverged)."""


class OptimizationError(IcbError):
    """An inner optimisation (MAP, ADVI) failed to make progress."""


class MetricError(IcbError):
    """A metric could not be evaluated on the given inputs."""


class DataError(IcbError):
    """A raw table or preprocessing step violates its contract."""


class CheckpointError(IcbError):
    """A checkpoint file is missing, corrupt, or incompatible."""
