"""Exception hierarchy shared across the package."""


class AvgHJBError(Exception):
    """Base class for all package errors."""


class ConfigError(AvgHJBError):
    """Invalid user-supplied configuration (CLI exit code 1)."""


class NumericalError(AvgHJBError):
    """A numerical routine could not produce a trustworthy result (CLI exit code 2)."""


# model
class NonDegeneracyViolation(NumericalError):
    pass


class PolicyDomainMismatch(ConfigError):
    pass


class RatioUnbounded(NumericalError):
    pass


# discretize
class InvalidGrid(ConfigError):
    pass


class PolicyLengthMismatch(ConfigError):
    pass


class SingularSystem(NumericalError):
    pass


# valuedet
class TransienceDetected(NumericalError):
    """The chain only looks stable because of the reflecting wall."""

    def __init__(self, message, left_mass=float("nan"), right_mass=float("nan")):
        super().__init__(message)
        self.left_mass = left_mass
        self.right_mass = right_mass


class InconsistentSystem(NumericalError):
    pass


class InvalidRadius(ConfigError):
    pass


# solvers
class UnstableInitialPolicy(NumericalError):
    pass


class NonMonotone(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


# verify
class RhoOutOfRange(ConfigError):
    pass


# analytic
class DomainError(ConfigError):
    pass


class QuadratureFailure(NumericalError):
    pass


# sde
class InvalidConfig(ConfigError):
    pass


class CensoringExcessive(NumericalError):
    pass
