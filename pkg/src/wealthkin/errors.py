"""Exception types shared across the library."""


class WealthKinError(Exception):
    """Base class for all library errors."""


class DegenerateVarianceError(WealthKinError, ValueError):
    """Moment pair with (nearly) zero wealth variance; the trading rate is singular there."""


class DivergentMomentError(WealthKinError, ValueError):
    """A requested moment of the equilibrium distribution does not exist."""


class DivergentIntegralError(WealthKinError, ValueError):
    """A flux-coefficient integral does not converge for the given velocity factor."""


class SingularSystemError(WealthKinError, RuntimeError):
    """The discrete steady-state problem has no positive solution."""


class NonConvergenceError(WealthKinError, RuntimeError):
    """An iterative solve failed to reach its tolerance within the iteration budget."""


class CFLError(WealthKinError, ValueError):
    """Requested time step exceeds the advective stability limit."""


class OutOfDomainError(WealthKinError, ValueError):
    """Evaluation point lies outside the configuration interval."""


class SparseBinError(WealthKinError, ValueError):
    """An occupied configuration bin holds too few agents for stable local moments."""


class MomentMismatchError(WealthKinError, ValueError):
    """A density's quadrature moments differ from the prescribed moment vector."""


class IncompatibleDomainError(WealthKinError, ValueError):
    """Two trajectories cannot be compared because their domains or times do not overlap."""


class InsufficientSupportError(WealthKinError, ValueError):
    """Tail-fit window contains too few usable points."""


class ScenarioError(WealthKinError, ValueError):
    """Scenario file failed to parse or validate.

    Carries the full list of violations so a user can fix them in one pass.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
