"""Exception types shared across the package."""


class LexalignError(Exception):
    """Base class for every error this package raises on purpose."""


class DataError(LexalignError):
    """Malformed or unusable input: files, dictionaries, vocabularies."""


class ShapeError(LexalignError):
    """Operands whose dimensions do not line up."""


class NumericalError(LexalignError):
    """Numerical failure: non-finite values, zero norms, non-convergence."""
