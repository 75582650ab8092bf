"""Exception hierarchy shared by every cpca module."""


class CPCAError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(CPCAError, ValueError):
    """Operand shapes do not conform."""


class SingularBlockError(CPCAError, ValueError):
    """A Laplacian interior block is singular because some connected
    components contain no kept/known node.

    ``components`` lists the offending component ids and ``nodes`` one
    representative node per component.
    """

    def __init__(self, message, components=(), nodes=()):
        super().__init__(message)
        self.components = tuple(components)
        self.nodes = tuple(nodes)


class BreakdownError(CPCAError, ArithmeticError):
    """Conjugate gradient met a direction of zero (or negative) curvature."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class DivergenceError(CPCAError, ArithmeticError):
    """An iterative solver produced a non-finite objective."""


class FormatError(CPCAError, ValueError):
    """A file could not be parsed."""


class StageError(CPCAError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
