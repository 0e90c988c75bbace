"""Exception hierarchy shared by every module."""


class SigDrawdownError(Exception):
    """Base class."""


class DomainError(SigDrawdownError, ValueError):
    """A parameter lies outside its admissible range."""


class SizeError(SigDrawdownError, ValueError):
    """Lengths or shapes are inconsistent, or there is too little data."""


class DataError(SigDrawdownError, ValueError):
    """Input files are malformed."""


class NumericalError(SigDrawdownError, ArithmeticError):
    """A factorisation failed or a loss became non-finite."""
