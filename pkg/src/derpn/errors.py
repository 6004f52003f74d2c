class ValidationError(ValueError):
    """Bad user input: malformed files, out-of-range parameters, unknown config keys."""


class InvariantError(RuntimeError):
    """An internal consistency check failed. Indicates a bug, not bad input."""
