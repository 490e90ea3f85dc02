"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments violating its preconditions."""


class ConfigError(ValueError):
    """A configuration object violates its invariants."""


class UndefinedSimilarity(ContractViolation):
    """Cosine similarity requested for a zero-norm vector."""


class EstimationFailed(RuntimeError):
    """An empirical estimator could not produce a value (all probes degenerate)."""
