"""Exception hierarchy. Every error raised on purpose derives from EvtWalkError."""


class EvtWalkError(Exception):
    pass


class ConfigError(EvtWalkError):
    """Invalid experiment configuration (CLI exit code 1)."""


# generator measures
class MeasureError(EvtWalkError, ValueError):
    pass


class EmptySupport(MeasureError):
    pass


class NonUnimodular(MeasureError):
    pass


class NonIntegerEntries(MeasureError):
    pass


class BadWeights(MeasureError):
    pass


# torus
class InfiniteDelta(EvtWalkError, ArithmeticError):
    """The walk hit the target point exactly, so -log d is infinite."""


class WordLimitExceeded(EvtWalkError):
    pass


class BallTooLarge(EvtWalkError, ValueError):
    pass


# lattices
class IllConditioned(EvtWalkError, ArithmeticError):
    pass


class BudgetExceeded(EvtWalkError):
    pass


class DetCollapsed(EvtWalkError, ArithmeticError):
    pass


class ReductionDiverged(EvtWalkError, ArithmeticError):
    pass


# estimators
class StreamExhausted(EvtWalkError):
    pass


class EmptySample(EvtWalkError, ValueError):
    pass


class MissingFit(EvtWalkError, ValueError):
    pass


class InsufficientExceedances(EvtWalkError):
    pass


class InsufficientTrajectories(EvtWalkError):
    pass


class NoDecayResolved(EvtWalkError):
    """All correlations sit inside the noise floor: consistent with fast mixing."""
