"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Malformed configuration or arguments (CLI exit code 2)."""


class DomainError(ValidationError):
    """An argument lies outside the domain where a quantity is defined."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to reach its tolerance (CLI exit code 3).

    The ``achieved`` attribute carries the best error estimate available.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved
