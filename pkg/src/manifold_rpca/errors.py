"""Exception hierarchy shared across the package."""


class RPCAError(Exception):
    """Base class for all package errors."""


class ParameterError(RPCAError, ValueError):
    """A scalar parameter (gamma, eta, rank, p, ...) is out of range."""


class InputError(RPCAError, ValueError):
    """Matrix input is malformed: wrong shape, non-finite entries, empty."""


class DegenerateRankError(RPCAError, ArithmeticError):
    """A matrix that must have rank r has a vanishing r-th singular value."""


class RetractionSingularError(RPCAError, ArithmeticError):
    """The r x r middle matrix of the orthographic retraction is singular."""


class DivergenceError(RPCAError, ArithmeticError):
    """Iterates blew up (non-finite or growing without bound)."""


class FormatError(RPCAError):
    """A matrix/mask file has a bad header or is truncated."""
