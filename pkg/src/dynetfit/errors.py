"""Exception types shared across the package.

The command line tool maps these onto distinct exit codes, so library code
should raise the most specific one that applies.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, manifests, masks)."""


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a usable result."""


class IterationLimit(RuntimeError):
    """An iterative solver hit its iteration cap before converging."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
