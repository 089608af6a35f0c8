"""Error taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise the
most specific class that applies instead of bare ValueError/RuntimeError.
"""


class ValidationError(ValueError):
    """Malformed or out-of-range user input (instances, offsets, flags)."""


class SolverError(RuntimeError):
    """An iterative numerical routine failed to converge or lost accuracy."""
