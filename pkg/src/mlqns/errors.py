"""Exception and warning types raised across the package."""


class QnsError(Exception):
    """Base class for all package errors."""


class ConvergenceError(QnsError):
    """An eigensolver or iterative routine failed to converge."""


class SingularityError(QnsError):
    """Evaluation at a point where the model is singular (e.g. half flux, d=0)."""


class LabelingError(QnsError):
    """Dressed-state labels cannot be assigned unambiguously."""


class NonMonotoneError(QnsError):
    """A curve that must be inverted is not monotone in the requested range."""


class IllConditionedError(QnsError):
    """A linear inversion is too poorly conditioned to be meaningful."""


class SynthesisError(QnsError):
    """Noise synthesis received an empty or invalid band."""


class CouplingError(QnsError):
    """A level-coupling model does not cover the sensor truncation."""


class IntegratorError(QnsError):
    """Trace preservation was violated beyond tolerance during propagation."""


class PositivityError(QnsError):
    """A propagated density matrix acquired a negative eigenvalue."""


class FitError(QnsError):
    """A decay fit did not converge.

    The residuals at the last iterate are attached for diagnosis.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ConfigError(QnsError):
    """Campaign configuration is malformed."""


class TransmonRegimeWarning(UserWarning):
    pass


class NegativeEstimateWarning(UserWarning):
    pass


class IllConditionedWarning(UserWarning):
    pass
