"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates the documented preconditions."""


class SingularMatrixError(RuntimeError):
    """The direct factorization hit a (numerically) zero pivot."""


class StepFailure(RuntimeError):
    """A Newton step could not be computed."""

    def __init__(self, iteration, message):
        super().__init__(f"SSN step {iteration} failed: {message}")
        self.iteration = iteration


class SeedFailure(RuntimeError):
    """No admissible random state could be drawn for a verification run."""
