"""Log-barrier interior-point method for smooth convex programs.

minimize f(x)  s.t.  g_i(x) <= 0, strictly feasible start required.

Outer path: t_0 = 10, t <- 10 t until m/t reaches the gap tolerance.
Inner: damped Newton with backtracking line search (alpha = 0.25,
beta = 0.5), stopping at squared Newton decrement / 2 <= 1e-9.

Constraints come grouped in blocks so the linear algebra stays vectorized:
a block exposes value(x) -> (m_b,), grad(x) -> (m_b, n) and
hess_weighted(x, w) -> (n, n) contribution  sum_i w_i * hess(g_i)
(None for affine blocks).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import FeasibilityRestorationError

MU_INITIAL = 10.0
MU_UPDATE = 10.0
NEWTON_TOL = 1e-9
GRAD_TOL = 1e-7             # dual-residual target enforced on the final stage
LINESEARCH_ALPHA = 0.25
LINESEARCH_BETA = 0.5

CONVERGED = "converged"
MAX_ITER = "max_iterations"


class LinearBlock:
    """Affine inequalities A x - b <= 0."""

    def __init__(self, a, b):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))

    def value(self, x):
        return self.a @ x - self.b

    def grad(self, x):
        return self.a

    def hess_weighted(self, x, w):
        return None

    def __len__(self):
        return self.b.size


def box_block(lo, hi) -> LinearBlock:
    """Bounds lo <= x <= hi as a LinearBlock (infinite bounds skipped)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = lo.size
    rows, rhs = [], []
    eye = np.eye(n)
    for j in range(n):
        if np.isfinite(lo[j]):
            rows.append(-eye[j])
            rhs.append(-lo[j])
        if np.isfinite(hi[j]):
            rows.append(eye[j])
            rhs.append(hi[j])
    return LinearBlock(np.array(rows), np.array(rhs))


class FunctionObjective:
    """Objective from two callables: cheap value(x) and full deriv(x)."""

    def __init__(self, value_fn, deriv_fn):
        self._value = value_fn
        self._deriv = deriv_fn

    def value(self, x):
        return float(self._value(x))

    def deriv(self, x):
        return self._deriv(x)


@dataclass
class SmoothConvexProgram:
    objective: object               # .value(x), .deriv(x) -> (val, grad, hess|None)
    blocks: list
    x0: np.ndarray
    gap_tol: float = 1e-8
    max_newton_per_stage: int = 250


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    status: str = CONVERGED
    stages: int = 0
    newton_steps: int = 0
    objective_path: list = field(default_factory=list)


def _barrier_value(blocks, x):
    """phi(x) = -sum log(-g_i(x)); +inf outside the strict interior."""
    total = 0.0
    for blk in blocks:
        v = blk.value(x)
        if np.any(v >= 0.0) or not np.all(np.isfinite(v)):
            return np.inf
        total -= np.log(-v).sum()
    return total


def solve_barrier(prog: SmoothConvexProgram) -> BarrierResult:
    x = np.asarray(prog.x0, dtype=float).copy()
    n = x.size
    m = sum(len(b) for b in prog.blocks)
    if _barrier_value(prog.blocks, x) == np.inf:
        raise FeasibilityRestorationError("start point is not strictly feasible", last_iterate=x)

    t = MU_INITIAL
    status = CONVERGED
    stages = 0
    steps_total = 0
    path = []
    while True:
        final = m == 0 or m / t <= prog.gap_tol
        reason, steps = _newton_stage(prog, x, t, GRAD_TOL if final else None)
        steps_total += steps
        stages += 1
        path.append(prog.objective.value(x))
        if reason == "budget":
            status = MAX_ITER
            break
        if final:
            break
        t *= MU_UPDATE

    val, grad, _ = prog.objective.deriv(x)
    grad_lag = np.asarray(grad, dtype=float).copy()
    for blk in prog.blocks:
        v = blk.value(x)
        lam = 1.0 / (t * (-v))
        grad_lag += blk.grad(x).T @ lam
    r_gap = 0.0 if m == 0 else m / t
    kkt = max(float(np.max(np.abs(grad_lag))), r_gap)
    return BarrierResult(x=x, objective=float(val), kkt_residual=kkt,
                         status=status, stages=stages, newton_steps=steps_total,
                         objective_path=path)


def _newton_stage(prog, x, t, grad_tol=None):
    """Minimize f + phi/t in place; returns (reason, steps).

    Scaling by 1/t (rather than the textbook t*f + phi) keeps line-search
    values at the objective's own magnitude for large t, and makes the
    stage gradient equal the KKT dual residual directly.  On the final
    stage `grad_tol` additionally requires that residual in the inf-norm;
    the Newton decrement alone is blind to the steep barrier curvature at
    nearly-active constraints.
    """
    obj = prog.objective
    blocks = prog.blocks
    n = x.size
    inv_t = 1.0 / t
    for it in range(prog.max_newton_per_stage):
        val, grad, hess = obj.deriv(x)
        g = np.asarray(grad, dtype=float).copy()
        h = hess.copy() if hess is not None else np.zeros((n, n))
        for blk in blocks:
            v = blk.value(x)
            gr = blk.grad(x)
            inv = inv_t / (-v)
            g += gr.T @ inv
            h += (gr * (inv * (1.0 / (-v)))[:, None]).T @ gr
            extra = blk.hess_weighted(x, inv)
            if extra is not None:
                h += extra
        try:
            factor = cho_factor(h, lower=True, check_finite=False)
            d = -cho_solve(factor, g, check_finite=False)
        except np.linalg.LinAlgError:
            h[np.diag_indices_from(h)] += 1e-10 * (1.0 + np.abs(np.diag(h)))
            factor = cho_factor(h, lower=True, check_finite=False)
            d = -cho_solve(factor, g, check_finite=False)
        decrement_sq = float(-g @ d)
        if decrement_sq / 2.0 <= NEWTON_TOL and (grad_tol is None or np.max(np.abs(g)) <= grad_tol):
            return "tol", it
        f0 = val + inv_t * _barrier_value(blocks, x)
        slope = float(g @ d)
        step = 1.0
        for _ in range(100):
            x_try = x + step * d
            f_try = obj.value(x_try) + inv_t * _barrier_value(blocks, x_try)
            if f_try <= f0 + LINESEARCH_ALPHA * step * slope:
                break
            step *= LINESEARCH_BETA
        else:
            return "stall", it + 1   # no strictly-feasible descent step left
        x += step * d
    return "budget", prog.max_newton_per_stage
