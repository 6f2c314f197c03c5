"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, InfeasibleError -> 3,
GuardError -> 4.
"""


class ConfigError(ValueError):
    """A configuration file or parameter set failed validation."""


class InfeasibleError(ValueError):
    """The requested instance admits no feasible solution (e.g. more devices than subcarriers)."""


class GuardError(RuntimeError):
    """An exhaustive oracle refused to run because the instance exceeds its enumeration bound."""
