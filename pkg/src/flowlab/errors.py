"""Exception hierarchy shared across the package."""


class FlowLabError(Exception):
    """Base class for all flowlab errors."""


class EvaluationError(FlowLabError):
    """An integrand returned a non-finite value at a quadrature node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class CapabilityError(FlowLabError):
    """A derivative (or other capability) was requested but is unavailable."""


class ExplosionError(FlowLabError):
    """A trajectory left the admissible region (non-finite or > guard radius)."""

    def __init__(self, message, step=None, indices=None):
        super().__init__(message)
        self.step = step
        self.indices = indices if indices is not None else []


class ConfigError(FlowLabError):
    """Invalid experiment configuration (bad key, bad value, bad schema)."""

    def __init__(self, message, section=None, key=None):
        super().__init__(message)
        self.section = section
        self.key = key


class SolverFailureError(FlowLabError):
    """The PDE solver produced an inadmissible state (e.g. large negative mass)."""


class BoundUnavailableError(FlowLabError):
    """A theoretical bound could not be evaluated (divergent integral)."""


class OracleMismatchError(FlowLabError):
    """Two independent computations of the same oracle value disagree."""
