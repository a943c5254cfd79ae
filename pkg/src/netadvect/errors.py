"""Exception types shared across the package (mapped to CLI exit codes)."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class NumericalError(RuntimeError):
    """A computation produced unusable numbers or failed to converge."""


class DivergenceError(NumericalError):
    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite density at step {step} (t={time:g})")
        self.step = step
        self.time = time


class EigenSolverError(NumericalError):
    pass


class ResultConflictError(OSError):
    """Output directory holds results from a different configuration."""
