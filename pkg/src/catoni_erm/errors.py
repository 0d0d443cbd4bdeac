"""Exception types raised across the package."""


class CatoniError(Exception):
    """Base class for all package errors."""


class EmptySample(CatoniError, ValueError):
    pass


class NonFiniteInput(CatoniError, ValueError):
    pass


class ConfidenceTooTightForN(CatoniError, ValueError):
    pass


class NonPositiveVariance(CatoniError, ValueError):
    pass


class SampleTooSmall(CatoniError, ValueError):
    pass


class BadBlockCount(CatoniError, ValueError):
    pass


class ConvergenceError(CatoniError, ArithmeticError):
    """An iterative solver hit its iteration cap."""


class InsufficientSamples(CatoniError, ValueError):
    pass


class SolvabilityViolated(CatoniError, ValueError):
    pass


class QuadratureFailure(CatoniError, ArithmeticError):
    pass


class DegenerateWeights(CatoniError, ArithmeticError):
    pass


class NoInitialPoints(CatoniError, ValueError):
    pass


class SingularDesign(CatoniError, ArithmeticError):
    pass


class EmptyCodebook(CatoniError, ValueError):
    pass


class BadK(CatoniError, ValueError):
    pass


class BadTailIndex(CatoniError, ValueError):
    pass


class NotPositiveDefinite(CatoniError, ValueError):
    pass


class MissingColumns(CatoniError, ValueError):
    pass
