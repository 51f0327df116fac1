"""Exception hierarchy shared by all ldthermo modules."""


class LDThermoError(Exception):
    """Base class for every error raised by ldthermo."""


class UnknownModel(LDThermoError, KeyError):
    pass


class InvalidParam(LDThermoError, ValueError):
    pass


class ExpressionError(InvalidParam):
    """A custom drift/diffusion expression could not be parsed or evaluated."""


class DegenerateDiffusion(LDThermoError, ValueError):
    """D(x) is not symmetric positive definite somewhere on the grid."""


class DecompositionMismatch(LDThermoError, ValueError):
    """Analytic phi_ss / gamma do not reproduce the drift."""


class SingularDiffusion(LDThermoError, ValueError):
    pass


class BlowUp(LDThermoError, FloatingPointError):
    """A trajectory left the admissible box or produced non-finite values."""


class EmptySupport(LDThermoError, ValueError):
    pass


class InsufficientSamples(LDThermoError, ValueError):
    pass


class UnstableStep(LDThermoError, RuntimeError):
    pass


class DimUnsupported(LDThermoError, NotImplementedError):
    pass


class NoConvergence(LDThermoError, RuntimeError):
    """Iteration budget exhausted. ``result`` carries the best iterate, if any."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NotDetailedBalance(LDThermoError, ValueError):
    pass


class KernelInvalid(LDThermoError, ValueError):
    """The Gaussian short-time kernel is not valid at the requested time resolution."""


class NegativeAlpha(LDThermoError, ValueError):
    pass


class ConfigError(LDThermoError, ValueError):
    """Bad run configuration; ``key`` names the offending entry when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
