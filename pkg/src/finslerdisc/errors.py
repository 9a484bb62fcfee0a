"""Exception types shared across the toolkit."""


class FinslerError(Exception):
    """Base class for all toolkit errors."""


class DomainError(FinslerError):
    """Input outside the mathematical domain of an operation."""


class NumericError(FinslerError):
    """An iterative solver failed to converge.

    Carries the final residual when available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ContractError(FinslerError):
    """A caller-side precondition was violated beyond tolerance."""


class PerturbationTooLargeError(FinslerError):
    """The supplied perturbation exceeds what the construction tolerates."""


class NicenessError(FinslerError):
    """A scattering table failed the invertibility/symplecticity requirements."""


class ConvexityError(FinslerError):
    """A sampled cosphere curve is not quadratically convex."""


class ConfigError(FinslerError):
    """Malformed or inconsistent run configuration."""


class StageError(FinslerError):
    """A pipeline stage failed; wraps the underlying error with a stage tag."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
