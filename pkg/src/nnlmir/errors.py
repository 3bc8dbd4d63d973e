"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericalError`` -> 3.
"""


class DataError(ValueError):
    """Malformed or missing input data."""


class NumericalError(FloatingPointError):
    """A loss or parameter became non-finite."""
