"""Exception types shared across the package."""


class MacoordError(Exception):
    """Base class for package-specific failures."""


class InvalidActionError(MacoordError, ValueError):
    """An (agent, slot) pair falls outside the declared partition."""


class ScaleError(MacoordError, ValueError):
    """An exact/brute-force routine was asked to enumerate too large a space.

    Callers hitting this should switch to the Monte-Carlo estimators.
    """


class TopologyError(MacoordError, ValueError):
    """A communication graph violates a structural requirement."""


class ConfigError(MacoordError, ValueError):
    """A run configuration is malformed or inconsistent."""


class DataError(MacoordError, ValueError):
    """Logged experiment data is missing fields required by an operation."""
