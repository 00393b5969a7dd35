class KolmoError(Exception):
    """Base class for all package errors."""


class ValidationError(KolmoError, ValueError):
    """Inputs violate a documented precondition."""


class NumericalError(KolmoError, ArithmeticError):
    """A numerical procedure failed to meet its tolerance."""


class ConvergenceError(NumericalError):
    def __init__(self, msg, last_values=None):
        super().__init__(msg)
        self.last_values = last_values


class BracketError(NumericalError):
    pass


class LatticeOverflowError(KolmoError):
    """Result has modes outside the target lattice and truncation was not requested."""


class SingularBlockError(NumericalError):
    def __init__(self, msg, block=None):
        super().__init__(msg)
        self.block = block


class BlowUpError(NumericalError):
    def __init__(self, msg, t=None):
        super().__init__(msg)
        self.t = t


class NoBranchError(KolmoError):
    """No steady secondary branch exists on this side of the critical value."""
