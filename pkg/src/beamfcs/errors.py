"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for inputs that
violate a documented precondition, and :class:`NumericalError` for
computations that could not be carried out to the required accuracy.
The CLI maps them to exit codes 2 and 3.
"""


class BeamFCSError(Exception):
    """Base class for all library errors."""


class ValidationError(BeamFCSError, ValueError):
    """An input violates a documented precondition."""


class NumericalError(BeamFCSError, ArithmeticError):
    """A computation failed or could not reach its accuracy target."""


# operator core
class NotHermitian(ValidationError):
    pass


class NotPSD(ValidationError):
    pass


class BoseNormViolation(ValidationError):
    pass


class SingularDeterminant(NumericalError):
    pass


class BranchAmbiguity(NumericalError):
    pass


# point processes
class NonConvergent(NumericalError):
    pass


class ZeroClickRate(NumericalError):
    pass


class NonStationary(NumericalError):
    pass


class OverlappingRegions(ValidationError):
    pass


# arrival time / beams
class GridTooCoarse(ValidationError):
    pass


class AliasRisk(ValidationError):
    pass


class ZeroRate(NumericalError):
    pass


# source model
class PoleCrossing(ValidationError):
    pass


class IntegratorFailure(NumericalError):
    pass


# sampler
class EigenvalueOutOfRange(ValidationError):
    pass


class EmptyData(ValidationError):
    pass
