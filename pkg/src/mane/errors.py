"""Exception types raised across the package."""


class ManeError(Exception):
    """Base class for all package errors."""


class ConfigError(ManeError, ValueError):
    pass


class NumericalError(ManeError, ArithmeticError):
    """Base for failures of a numerical procedure (solvers, optimizers)."""


class LevelEmpty(ManeError, ValueError):
    """The energy level misses the fibre over a sampled base point."""


class NonPositiveConformal(ManeError, ValueError):
    pass


class NewtonDivergence(NumericalError):
    pass


class StepSolverDiverged(NumericalError):
    pass


class NonFiniteState(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class SectionNotTransverse(NumericalError):
    pass


class Diverged(NumericalError):
    pass


class NonZeroHomology(ManeError, ValueError):
    pass


class DomainViolation(ManeError, ValueError):
    """A finite-difference stencil left the domain a form was declared on."""


class NotLevelConstant(ManeError, ValueError):
    pass


class OffLevel(ManeError, ValueError):
    pass


class MonotonicityViolation(NumericalError):
    pass


class ParameterChainInvalid(ManeError, ValueError):
    pass


class ConvexityCheckFailed(NumericalError):
    pass
