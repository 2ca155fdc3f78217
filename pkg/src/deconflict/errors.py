"""Exception types raised across the package."""


class DeconflictError(Exception):
    """Base class for all package errors."""


class InitialLoss(DeconflictError):
    """Two aircraft are already closer than the separation norm at t = 0."""


class ZeroRelativeVelocity(DeconflictError):
    """Relative velocity vanishes, so no time of minimum separation exists."""


class Infeasible(DeconflictError):
    """An optimization problem has no feasible point."""


class IterationLimit(DeconflictError):
    """A solver ran out of iterations before meeting its tolerances."""


class GenerationFailure(DeconflictError):
    """Random instance generation could not satisfy its constraints."""


class InstanceFormatError(DeconflictError):
    """An instance file is malformed."""
