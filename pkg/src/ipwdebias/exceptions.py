"""Exception hierarchy shared by all modules."""


class IPWError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(IPWError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(InvalidArgumentError):
    """An experiment or CLI configuration is invalid."""


class NumericalOverflowError(IPWError, ArithmeticError):
    """A computation produced a non-finite result."""


class NonConvergenceError(IPWError):
    """The logistic MLE did not converge (separation, singularity, or iteration cap)."""

    def __init__(self, message, iterations):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class SingularFisherError(IPWError, ArithmeticError):
    """The empirical Fisher matrix is not numerically positive definite."""


class DegeneratePropensityError(IPWError, ArithmeticError):
    """A fitted propensity is numerically 0 or 1."""


class DegenerateArmError(IPWError, ArithmeticError):
    """A treatment arm is empty or a normalizing denominator vanishes."""


class InvalidScenarioError(IPWError):
    """A scenario produced a population Fisher matrix that is not positive definite."""


# Errors that mark a single trial as failed rather than aborting an experiment.
ESTIMATION_ERRORS = (
    NonConvergenceError,
    SingularFisherError,
    DegeneratePropensityError,
    DegenerateArmError,
    NumericalOverflowError,
)
