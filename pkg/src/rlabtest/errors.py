class InputError(ValueError):
    """Malformed or dimensionally inconsistent input."""


class StateError(RuntimeError):
    """Operation called out of order (e.g. before any data arrived)."""


class NumericalError(ArithmeticError):
    """Singular systems or degenerate variance estimates."""
