"""Exception types shared across the solver stack."""


class PoissonCapError(Exception):
    """Base class for solver-level failures."""


class DegenerateDistributionError(PoissonCapError):
    """The input distribution collapsed (all scores zero / all points deleted).

    Carries the best partial result seen so far when raised by the driver.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InfeasibleConstraintError(PoissonCapError):
    """The average-power constraint cannot be met on the current support."""
