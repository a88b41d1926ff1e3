"""Exception types shared across the package."""


class UsageError(ValueError):
    """Invalid arguments or configuration supplied by the caller."""


class NumericError(ArithmeticError):
    """A non-finite value appeared in an objective value or particle position.

    Attributes
    ----------
    index : int or None
        Offending particle index, when known.
    iteration : int or None
        Iteration at which the failure was detected, when known.
    """

    def __init__(self, message, index=None, iteration=None):
        super().__init__(message)
        self.index = index
        self.iteration = iteration


class ConfigError(UsageError):
    """A configuration document failed validation.

    ``path`` is the dotted location of the offending field, e.g. ``optimizer.M``.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
