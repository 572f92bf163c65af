"""
Exception hierarchy shared by the numerical modules and the CLI.
"""


class SpectralToolkitError(Exception):
    """Base class for toolkit errors."""


class PrecisionExhaustedError(SpectralToolkitError):
    """The available digits cannot certify the next partial quotient."""


class InsufficientDepthError(SpectralToolkitError):
    """Not enough convergents for the requested estimate."""


class OverflowGuardError(SpectralToolkitError):
    """A renormalized product left the representable range."""


class UnclassifiableRegimeError(SpectralToolkitError):
    """The acceleration did not snap to an integer."""


class DomainError(SpectralToolkitError, ValueError):
    """Argument outside the mathematical domain of the operation."""


class PoleProximityError(SpectralToolkitError):
    """A real evaluation point sits on the support of the measure."""


class NumericHealthError(SpectralToolkitError):
    """A numerical health check failed beyond tolerance."""


class ConfigValidationError(SpectralToolkitError):
    """Run configuration failed validation."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))
