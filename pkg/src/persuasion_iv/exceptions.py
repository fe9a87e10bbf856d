"""
Exceptions and warnings raised by Persuasion IV.

Errors fall into two families.  :class:`ValidationError` covers bad input
(data, DGP files, settings) and maps to CLI exit code 1.
:class:`NumericalError` covers estimands or solvers that cannot produce a
number and maps to exit code 2.
"""


class PersuasionError(Exception):
    """
    **Base class** for all Persuasion IV exceptions.
    """


class ValidationError(PersuasionError):
    """
    **Base class** for errors caused by invalid input.
    """


class SampleValidationError(ValidationError):
    """
    Raised when a data file, an instrument pair or a cell specification is
    invalid.
    """


class DgpSpecError(ValidationError):
    """
    Raised when a latent data-generating process is malformed.
    """


class AdmissibleRangeError(ValidationError):
    """
    Raised when a sensitivity parameter lies outside its admissible interval.
    """


class UnknownFormatError(ValidationError):
    """
    Raised when no file format loader is configured for a given config file.
    """


class ConfigFileNotFoundError(ValidationError):
    """
    Raised when a mandatory config file does not exist.
    """


class ConfigFileLoadError(ValidationError):
    """
    Raised when a config file exists but cannot be read or parsed.
    """


class InvalidOptionsError(ValidationError):
    """
    Raised when loaded settings contain an option that the settings class does
    not define.
    """


class InvalidSettingsError(ValidationError):
    """
    Raised when the loaded settings cannot be converted to an instance of the
    settings class.
    """


class NumericalError(PersuasionError):
    """
    **Base class** for errors raised when a quantity is not identified or a
    solver fails on the given data.
    """


class DegenerateDenominatorError(NumericalError):
    """
    Raised when the denominator of a ratio estimand is (numerically) zero.
    """


class WeakFirstStageError(DegenerateDenominatorError):
    """
    Raised when the first stage (or any Wald denominator) is below the guard.
    """


class ZeroMassError(DegenerateDenominatorError):
    """
    Raised when the subpopulation a profile conditions on has no mass.
    """


class DegenerateVarianceError(NumericalError):
    """
    Raised when the Anderson-Rubin variance is not positive at a null value.
    """


class DegenerateGridError(NumericalError):
    """
    Raised when a confidence-set grid has no width.
    """


class ConvergenceError(NumericalError):
    """
    Raised when the simplex-constrained least-squares solver does not converge.

    Args:
        message: The error message.
        residual: The residual norm at the last iterate.
        gradient_norm: Norm of the projected-gradient step at the last iterate.
    """

    def __init__(self, message: str, residual: float, gradient_norm: float) -> None:
        super().__init__(message)
        self.residual = residual
        self.gradient_norm = gradient_norm


class InstrumentOrientationWarning(UserWarning):
    """
    Issued when an instrument pair is swapped so that the first stage becomes
    positive.
    """
