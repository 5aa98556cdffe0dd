"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the support of the input model."""


class NumericalError(RuntimeError):
    """A linear-algebra operation failed or is too ill-conditioned to trust."""


class SingularUpdateError(NumericalError):
    """A rank-one Gram update hit a (near-)zero denominator."""


class DegenerateLeverageError(NumericalError):
    """A design point has leverage ~1, so leave-one-out formulas divide by ~0."""


class CollinearityError(NumericalError):
    """Active regressors are exactly (or numerically) collinear."""


class PathExplosionError(RuntimeError):
    """A homotopy path exceeded its breakpoint budget."""


class BracketFailureError(RuntimeError):
    """The bound search could not drive the boundary condition to zero."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
