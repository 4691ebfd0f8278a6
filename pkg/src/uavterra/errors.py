"""Error taxonomy shared across the package.

Plain ``ValueError`` is used for bad scalar arguments (negative distance,
angle out of range, degenerate segment).  The classes below cover the cases
the CLI needs to distinguish by exit code, plus fit failures that should
hand back the best model found so far.
"""

from __future__ import annotations


class ConfigError(Exception):
    """Invalid run configuration.  ``key`` is the dotted path of the offender."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class ResourceLimitError(Exception):
    """A requested grid or sample count exceeds the configured cap."""


class FitError(Exception):
    """Curve fit did not converge within its budget.

    ``best`` carries the best model found so far (may be usable anyway).
    """

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)
