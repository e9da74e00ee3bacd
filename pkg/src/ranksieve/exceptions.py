"""Exception types raised by the solver stack."""


class InvalidArgumentError(ValueError):
    """Inputs violate a documented precondition (shape, sign, range)."""


class NumericFailureError(ArithmeticError):
    """A non-finite value appeared inside an iterative kernel."""


class NonConvergenceError(RuntimeError):
    """An iteration cap was hit before the stopping test passed.

    ``best`` carries whatever partial result the raising layer had, so callers
    can still report it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class StagnationError(NonConvergenceError):
    """The Armijo line search could not find an acceptable step."""
