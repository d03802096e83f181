"""Exception hierarchy shared by all modules."""


class CBOError(Exception):
    """Base class for errors raised by this package."""


class UsageError(CBOError, ValueError):
    """Invalid arguments: wrong shapes, out-of-range parameters, unknown names."""


class DataError(CBOError, ValueError):
    """Invalid data encountered during a computation (e.g. non-finite objective values)."""


class NumericalBlowUpError(CBOError, ArithmeticError):
    """A simulation produced non-finite particle positions."""

    def __init__(self, message, particle=None, step=None):
        super().__init__(message)
        self.particle = particle
        self.step = step
