"""Exception and warning types raised across the package."""


class RobflrError(ValueError):
    """Base class for input and configuration errors."""


class TooFewBasis(RobflrError):
    pass


class BadDomain(RobflrError):
    pass


class OutOfDomain(RobflrError):
    pass


class BadGrid(RobflrError):
    pass


class Underdetermined(RobflrError):
    pass


class SingularDesign(RobflrError):
    pass


class DimensionMismatch(RobflrError):
    pass


class TooManyComponents(RobflrError):
    pass


class DegenerateData(RobflrError):
    pass


class Infeasible(RobflrError):
    """Trimming leaves too few samples to identify the regression matrix."""


class NonPositiveScale(RobflrError):
    pass


class BadSubsetSize(RobflrError):
    pass


class InputError(RobflrError):
    """Malformed or unreadable input file."""


class IncompatibleModel(RobflrError):
    """A persisted model document has an unsupported schema version."""


class RobflrWarning(UserWarning):
    pass


class NonConvergence(RobflrWarning):
    pass


class RankDeficient(RobflrWarning):
    pass


class DegenerateDistances(RobflrWarning):
    pass


class SmallTrimmedSet(RobflrWarning):
    pass
