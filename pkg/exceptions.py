"""Error types raised by the planner library and mapped to CLI exit codes."""

from typing import Optional


class PlannerError(Exception):
    """Base class for planner errors"""


class ScenarioError(PlannerError, ValueError):
    """A scenario file or scenario field failed validation."""

    def __init__(self, field: str, message: str, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = f"line {line}, " if line is not None else ""
        super().__init__(f"{where}{field}: {message}")


class UnreachableDestination(PlannerError, ValueError):
    """The destination cannot be reached within the slot budget."""

    def __init__(self, distance: float, budget: float, user: int = 1):
        self.distance = distance
        self.budget = budget
        self.user = user
        super().__init__(
            f"user {user}: destination is {distance:.6g} away but only "
            f"{budget:.6g} can be covered"
        )


class Infeasible(PlannerError):
    """Receding-horizon planning can no longer reach the destination."""

    def __init__(self, slot: int, distance: float, budget: float, committed=None):
        self.slot = slot
        self.distance = distance
        self.budget = budget
        self.committed = committed  # Trajectory committed before the failure
        super().__init__(
            f"slot {slot}: destination is {distance:.6g} away, "
            f"reachable budget is {budget:.6g}"
        )


class InfeasibleInput(PlannerError, ValueError):
    """A residual was requested for a trajectory outside the feasible set."""
