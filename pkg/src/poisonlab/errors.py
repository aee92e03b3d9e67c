"""Exception hierarchy shared by all poisonlab modules."""


class PoisonLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(PoisonLabError, ValueError):
    """Invalid parameters: non-finite values, bad budgets, inconsistent shapes."""


class MissingDataError(PoisonLabError):
    """A (device, time) cell required by the dataset layout is absent."""


class ParseError(PoisonLabError):
    """A CSV value could not be parsed under its declared attribute kind."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConstraintViolation(PoisonLabError):
    """An attack would leave its stealth constraint (e.g. the valid range)."""


class InsufficientDataError(PoisonLabError, ValueError):
    """Not enough history / samples for the requested estimate."""
