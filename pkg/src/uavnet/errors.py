"""Exception types shared across the toolkit."""


class GeometryError(ValueError):
    """Invalid or degenerate geometry (non-positive altitude, coincident points)."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """A caller-side contract was violated (shapes, masking, preconditions)."""


class ConfigError(ValueError):
    """Invalid run configuration."""


class InfeasibleThresholdError(ValueError):
    """LoS-probability threshold unattainable at any elevation angle <= 90 deg."""


class InsufficientFleetError(RuntimeError):
    """No feasible association even with all M UAVs activated."""


class InfeasibleClusterError(RuntimeError):
    """A cluster cannot be covered from any admissible UAV position."""

    def __init__(self, msg, worst_user=None):
        super().__init__(msg)
        self.worst_user = worst_user


class FeasibilityRestorationError(RuntimeError):
    """Barrier solver lost strict feasibility; carries the last iterate."""

    def __init__(self, msg, last_iterate=None):
        super().__init__(msg)
        self.last_iterate = last_iterate


class InternalError(RuntimeError):
    """Invariant the solver itself must maintain was broken (tolerance bug)."""
