"""Exception types shared across the package."""


class SupregError(Exception):
    """Base class for every error raised by this package."""


class InputError(SupregError, ValueError):
    """Malformed user input (bad interval, negative sigma, bad config)."""


class EmptyWindow(SupregError, RuntimeError):
    """A localized inner product was requested on a window with no data."""


class NoRoot(SupregError, RuntimeError):
    """The bandwidth equation has no root in (0, 1] for this configuration."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class SingularFit(SupregError, RuntimeError):
    """Local least-squares system too ill-conditioned even after regularization."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class EmptyGrid(SupregError, RuntimeError):
    """Every candidate window at a knot is empty of data."""


class EmptyFamily(SupregError, RuntimeError):
    """The requested interval is too short to place a single bump."""
