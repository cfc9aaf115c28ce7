"""Exception types shared across the package."""


class LevelNotAvailableError(KeyError):
    """A gradient evaluation was requested at a level the target cannot serve."""

    def __init__(self, level):
        super().__init__(level)
        self.level = level

    def __str__(self):
        return f"no forward operator available at level {self.level}"


class NumericalFailureError(RuntimeError):
    """A particle update produced a non-finite value.

    Carries the index of the first offending particle so failed runs can be
    diagnosed; runs are aborted rather than silently clipped.
    """

    def __init__(self, message, particle_index=None):
        super().__init__(message)
        self.particle_index = particle_index


class ConfigError(ValueError):
    """An experiment configuration failed validation (CLI exit code 2)."""
