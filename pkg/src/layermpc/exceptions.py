"""Exception hierarchy shared across the package."""


class LayerMPCError(Exception):
    """Base class for all package errors."""


class NumericalFailure(LayerMPCError):
    """An LP or QP solver stalled or hit its iteration cap."""


class MaxIterations(NumericalFailure):
    pass


class DimensionMismatch(LayerMPCError, ValueError):
    pass


class EmptySet(LayerMPCError):
    """Raised by operations whose precondition requires a nonempty set."""


class OutsideDomain(LayerMPCError):
    """The state lies outside the domain of the controller (the ladder's outer set)."""


class SetpointNotEquilibrium(LayerMPCError, ValueError):
    pass


class ControllerFailure(LayerMPCError):
    """Wraps a QP failure during closed-loop simulation."""

    def __init__(self, step, reason):
        super().__init__(f"controller failed at step {step}: {reason}")
        self.step = step
        self.reason = reason


class SamplingStalled(LayerMPCError):
    pass


class ConfigError(LayerMPCError, ValueError):
    pass
