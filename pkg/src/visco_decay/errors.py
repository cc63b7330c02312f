"""Exception hierarchy.

Every failure the harness can report maps to one of three CLI exit codes:
configuration problems (2), certificate failures (3) and numerical
failures (4).  The ``exit_code`` class attribute carries that mapping.
"""


class ViscoDecayError(Exception):
    exit_code = 4


# -- configuration ----------------------------------------------------------

class ConfigError(ViscoDecayError, ValueError):
    exit_code = 2


class IncompatibleDirichletData(ConfigError):
    pass


# -- certificates -----------------------------------------------------------

class CertificateError(ViscoDecayError):
    exit_code = 3


class NotDissipative(CertificateError):
    """Kernel mass is >= 1, so the residual stiffness l is not positive."""


class HypothesisG2Violated(CertificateError):
    """The tight rate -g'/g increases somewhere on the sample grid."""


class DelayTooFast(CertificateError):
    pass


class NegativeDelay(CertificateError):
    pass


class StabilityConditionViolated(CertificateError):
    pass


# -- numerical --------------------------------------------------------------

class CompressionFailed(ViscoDecayError):
    def __init__(self, message, best_error=None):
        super().__init__(message)
        self.best_error = best_error


class HistoryUnderflow(ViscoDecayError):
    pass


class ZFieldDegenerate(ViscoDecayError):
    pass


class StepTooLarge(ViscoDecayError):
    pass


class SolverError(ViscoDecayError):
    def __init__(self, message, t=None):
        if t is not None:
            message = f"{message} (t = {t:.6g})"
        super().__init__(message)
        self.t = t


class EquivalenceBroken(ViscoDecayError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class NonpositiveEnergy(ViscoDecayError):
    pass


class InconclusiveOrder(ViscoDecayError):
    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors
