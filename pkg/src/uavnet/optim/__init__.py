"""In-house solver kernels: dense simplex LP and a log-barrier Newton method."""

from .simplex import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    LpResult,
    solve_lp,
)
from .barrier import (
    CONVERGED,
    MAX_ITER,
    BarrierResult,
    FunctionObjective,
    LinearBlock,
    SmoothConvexProgram,
    box_block,
    solve_barrier,
)

__all__ = [
    "LinearProgram", "LpResult", "solve_lp", "OPTIMAL", "INFEASIBLE", "UNBOUNDED",
    "SmoothConvexProgram", "BarrierResult", "solve_barrier", "LinearBlock",
    "FunctionObjective", "box_block", "CONVERGED", "MAX_ITER",
]
