"""Exception hierarchy shared by every module."""


class NLNeumannError(Exception):
    """Base class for all library errors."""


class CornerPoint(NLNeumannError):
    """Normal requested at a non-smooth boundary point; use ``normal_cone``."""


class NotConvex(NLNeumannError):
    """Operation only defined for convex domains."""


class NoHit(NLNeumannError):
    """Flow of -gamma did not reach the target set within the time guard."""

    def __init__(self, message, point=None, node=None):
        super().__init__(message)
        self.point = point
        self.node = node


class StepTooLarge(NLNeumannError):
    """Distance kept increasing near the boundary band; reduce the step."""


class DeltaTooLarge(NLNeumannError):
    """Small-jump cutoff too coarse relative to the grid spacing."""


class NonIntegrable(NLNeumannError):
    """Levy measure fails the integrability check."""


class ClosureRequired(NLNeumannError):
    """A jump lands outside the computational box and no closure was given."""


class MonotonicityViolation(NLNeumannError):
    """Assembled scheme has a positive off-diagonal dependence."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NoConvergence(NLNeumannError):
    """Iteration budget exhausted; ``history`` holds the residual trace."""

    def __init__(self, message, history=None, values=None):
        super().__init__(message)
        self.history = history or []
        self.values = values


class StiffPenalty(NLNeumannError):
    """Automatic pseudo-time step collapsed below the floor."""


class NoTouchingPoint(NLNeumannError):
    """Probe extremum sits on the rim of the probe ball."""


class HorizonTooShort(NLNeumannError):
    """Discount tail beyond the horizon exceeds the requested accuracy."""


class ConfigError(NLNeumannError):
    """Malformed run configuration; ``key`` is the dotted key path."""

    def __init__(self, key, reason):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


class ValidationError(NLNeumannError):
    """A structural assumption failed; ``tag`` names it (BC1, BC3, A2, ...)."""

    def __init__(self, tag, reason):
        super().__init__(f"[{tag}] {reason}")
        self.tag = tag
        self.reason = reason
