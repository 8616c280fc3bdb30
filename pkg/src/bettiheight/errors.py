"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 2 for bad input,
3 for numerical or convergence failures, 4 for exhausted budgets.
"""


class BettiHeightError(Exception):
    exit_code = 3


class ValidationError(BettiHeightError, ValueError):
    exit_code = 2


class NumericError(BettiHeightError, ArithmeticError):
    exit_code = 3


class BudgetExceeded(BettiHeightError):
    exit_code = 4


# input problems
class SingularY(ValidationError):
    pass


class BranchCut(ValidationError):
    pass


class ZeroPoint(ValidationError):
    pass


class SpaceMismatch(ValidationError):
    pass


class BadIndexing(ValidationError):
    pass


class NonPositive(ValidationError):
    pass


class MissingC2(ValidationError):
    pass


class GenusTooSmall(ValidationError):
    pass


class RankMismatch(ValidationError):
    pass


class NotOnCurve(ValidationError):
    pass


class TwoTorsion(ValidationError):
    """2P is the point at infinity, so x(2P) is undefined."""


# numerical problems
class NoConvergence(NumericError):
    pass


class BranchJump(NumericError):
    pass


class DegenerateDirection(NumericError):
    pass


class NearPole(NumericError):
    pass
