"""Exception hierarchy shared by every kvnlab module."""


class KvnError(Exception):
    """Base class for all kvnlab errors."""


class InvalidDimension(KvnError, ValueError):
    pass


class InvalidRange(KvnError, ValueError):
    pass


class GridMismatch(KvnError, ValueError):
    pass


class MemoryGuard(KvnError, MemoryError):
    """Raised before allocating a dense operator that exceeds the configured cap."""


class BadWeights(KvnError, ValueError):
    pass


class StabilityBudgetExceeded(KvnError, ValueError):
    """A single advection sub-step would move the field further than allowed."""


class TrajectoryEscape(KvnError, RuntimeError):
    pass


class MaskViolation(KvnError, ValueError):
    pass


class NonPolynomial(KvnError, TypeError):
    pass


class CorruptHeader(KvnError, ValueError):
    pass


class ScenarioError(KvnError, ValueError):
    """Wraps a module error with the name of the scenario that raised it."""
