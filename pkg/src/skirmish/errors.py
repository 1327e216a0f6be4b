"""Exception types shared across the package."""


class SkirmishError(Exception):
    """Base class for all package errors."""


class ConfigError(SkirmishError):
    """Malformed config file, stat table, or scenario definition."""


class StatTableError(ConfigError):
    """Stat table violates a load-time invariant (range floor, healer count, ...)."""


class ScenarioError(SkirmishError):
    """Scenario cannot be instantiated (bad counts, unsatisfiable spawn, ...)."""


class InvalidActionError(SkirmishError):
    """An unavailable action was submitted while the availability mask is enforced."""


class LayoutError(SkirmishError):
    """A vector does not conform to the feature layout it was paired with."""


class ReplayDivergence(SkirmishError):
    """A replayed episode did not reproduce the recorded one."""
