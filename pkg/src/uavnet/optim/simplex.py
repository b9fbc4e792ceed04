"""Dense two-phase simplex for small/medium LPs.

minimize c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi

Bounds are handled by shifting/flipping variables into x' >= 0 (free
variables are split); finite upper ranges become extra <= rows.  Pivoting
uses Dantzig's rule and switches permanently to Bland's rule after a run
of degenerate pivots, which guards against cycling.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, InternalError

_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-8
_DEGENERATE_LIMIT = 40

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lo: np.ndarray | None = None   # default 0
    hi: np.ndarray | None = None   # default +inf

    def dims(self):
        c = np.asarray(self.c, dtype=float)
        n = c.size
        a_ub = np.zeros((0, n)) if self.a_ub is None else np.atleast_2d(np.asarray(self.a_ub, dtype=float))
        b_ub = np.zeros(0) if self.b_ub is None else np.atleast_1d(np.asarray(self.b_ub, dtype=float))
        a_eq = np.zeros((0, n)) if self.a_eq is None else np.atleast_2d(np.asarray(self.a_eq, dtype=float))
        b_eq = np.zeros(0) if self.b_eq is None else np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).copy()
        hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).copy()
        if a_ub.shape != (b_ub.size, n) or a_eq.shape != (b_eq.size, n):
            raise ContractError("constraint matrix dimensions are inconsistent")
        if lo.size != n or hi.size != n or np.any(lo > hi):
            raise ContractError("bounds are inconsistent")
        return c, a_ub, b_ub, a_eq, b_eq, lo, hi


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    objective: float = np.nan
    residual: float = 0.0
    iterations: int = 0


def solve_lp(lp: LinearProgram) -> LpResult:
    """Solve the LP; status is exactly one of optimal/infeasible/unbounded."""
    c, a_ub, b_ub, a_eq, b_eq, lo, hi = lp.dims()
    n = c.size

    # substitute fixed variables out
    fixed = np.isfinite(lo) & (lo == hi)
    x_fixed = np.where(fixed, lo, 0.0)
    keep = ~fixed
    obj_off = float(c[fixed] @ x_fixed[fixed])
    b_ub = b_ub - a_ub[:, fixed] @ x_fixed[fixed]
    b_eq = b_eq - a_eq[:, fixed] @ x_fixed[fixed]
    c_k, a_ub_k, a_eq_k = c[keep], a_ub[:, keep], a_eq[:, keep]
    lo_k, hi_k = lo[keep], hi[keep]
    m_keep = int(keep.sum())

    if m_keep == 0:
        ok = (np.all(b_ub >= -_FEAS_TOL) and np.all(np.abs(b_eq) <= _FEAS_TOL))
        if not ok:
            return LpResult(INFEASIBLE)
        res = _residual(lp, x_fixed)
        return LpResult(OPTIMAL, x=x_fixed, objective=obj_off, residual=res)

    # shift/flip/split into x' >= 0;  x = off + S x'  column-wise
    cols, offs, extra_ub = [], np.zeros(m_keep), []
    col_sign, split_pairs = np.ones(m_keep), []
    for j in range(m_keep):
        if np.isfinite(lo_k[j]):
            offs[j] = lo_k[j]
            if np.isfinite(hi_k[j]):
                extra_ub.append((j, hi_k[j] - lo_k[j]))
        elif np.isfinite(hi_k[j]):
            offs[j] = hi_k[j]
            col_sign[j] = -1.0
        else:
            split_pairs.append(j)

    n_prime = m_keep + len(split_pairs)
    tmat = np.zeros((m_keep, n_prime))   # x_keep = offs + tmat @ x'
    for j in range(m_keep):
        tmat[j, j] = col_sign[j]
    for extra_idx, j in enumerate(split_pairs):
        tmat[j, m_keep + extra_idx] = -1.0   # x_j = x'_j - x'_extra

    c_p = c_k @ tmat
    obj_off += float(c_k @ offs)
    a_ub_p = a_ub_k @ tmat
    b_ub_p = b_ub - a_ub_k @ offs
    a_eq_p = a_eq_k @ tmat
    b_eq_p = b_eq - a_eq_k @ offs
    if extra_ub:
        rows = np.zeros((len(extra_ub), n_prime))
        rhs = np.zeros(len(extra_ub))
        for i, (j, ub) in enumerate(extra_ub):
            rows[i, j] = 1.0
            rhs[i] = ub
        a_ub_p = np.vstack([a_ub_p, rows])
        b_ub_p = np.concatenate([b_ub_p, rhs])

    status, x_p, iters = _simplex_standard(c_p, a_ub_p, b_ub_p, a_eq_p, b_eq_p)
    if status != OPTIMAL:
        return LpResult(status, iterations=iters)
    x = x_fixed.copy()
    x[keep] = offs + tmat @ x_p
    x = np.clip(x, lo, hi)   # wash float dust off the bound transforms
    obj = float(c @ x)
    return LpResult(OPTIMAL, x=x, objective=obj, residual=_residual(lp, x), iterations=iters)


def _residual(lp: LinearProgram, x: np.ndarray) -> float:
    c, a_ub, b_ub, a_eq, b_eq, lo, hi = lp.dims()
    parts = [0.0]
    if b_ub.size:
        parts.append(float(np.max(np.maximum(a_ub @ x - b_ub, 0.0))))
    if b_eq.size:
        parts.append(float(np.max(np.abs(a_eq @ x - b_eq))))
    parts.append(float(np.max(np.maximum(lo - x, 0.0), initial=0.0)))
    parts.append(float(np.max(np.maximum(x - hi, 0.0), initial=0.0)))
    return max(parts)


def _simplex_standard(c, a_ub, b_ub, a_eq, b_eq):
    """min c x, A_ub x <= b_ub, A_eq x = b_eq, x >= 0 via two-phase tableau."""
    n = c.size
    m_ub, m_eq = b_ub.size, b_eq.size
    m = m_ub + m_eq
    if m == 0:
        # x >= 0 only: minimize by leaving everything at 0 unless improvable
        if np.any(c < -_PIVOT_TOL):
            return UNBOUNDED, None, 0
        return OPTIMAL, np.zeros(n), 0

    a = np.vstack([a_ub, a_eq])
    b = np.concatenate([b_ub, b_eq]).astype(float)
    slack = np.vstack([np.eye(m_ub), np.zeros((m_eq, m_ub))])
    body = np.hstack([a, slack])
    neg = b < 0
    body[neg] *= -1.0
    b[neg] = -b[neg]

    # rows with a usable slack basis column: <= rows that were not negated
    basis = -np.ones(m, dtype=int)
    needs_art = []
    for i in range(m):
        if i < m_ub and not neg[i]:
            basis[i] = n + i
        else:
            needs_art.append(i)
    n_real = n + m_ub
    n_art = len(needs_art)
    art = np.zeros((m, n_art))
    for j, i in enumerate(needs_art):
        art[i, j] = 1.0
        basis[i] = n_real + j

    # tableau: [body | art | b] plus two cost rows (phase2, phase1)
    tab = np.hstack([body, art, b[:, None]])
    cost2 = np.concatenate([c, np.zeros(m_ub + n_art), [0.0]])
    cost1 = np.zeros(n_real + n_art + 1)
    if n_art:
        cost1[n_real:n_real + n_art] = 1.0
        cost1 -= tab[needs_art].sum(axis=0)   # price out the artificial basis

    tab = np.vstack([tab, cost2[None, :], cost1[None, :]])
    iters = 0

    if n_art:
        it = _pivot_loop(tab, basis, m, cost_row=m + 1, allowed=n_real + n_art)
        iters += it
        if tab[m + 1, -1] < -_FEAS_TOL:
            return INFEASIBLE, None, iters
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= n_real:
                row = tab[i, :n_real]
                cand = np.nonzero(np.abs(row) > _PIVOT_TOL)[0]
                if cand.size:
                    _pivot(tab, basis, i, int(cand[0]))
                # else: redundant row; harmless to leave the artificial at 0
        tab[:, n_real:n_real + n_art] = 0.0   # bar artificials from re-entering

    it = _pivot_loop(tab, basis, m, cost_row=m, allowed=n_real)
    iters += it
    if it < 0:
        return UNBOUNDED, None, iters

    x_full = np.zeros(n_real + n_art)
    for i in range(m):
        if basis[i] >= 0:
            x_full[basis[i]] = tab[i, -1]
    return OPTIMAL, x_full[:n], iters


def _pivot(tab, basis, row, col):
    tab[row] /= tab[row, col]
    factors = tab[:, col].copy()
    factors[row] = 0.0
    tab -= np.outer(factors, tab[row])
    basis[row] = col


def _pivot_loop(tab, basis, m, cost_row, allowed):
    """Run simplex pivots on the tableau; returns iteration count, -1-k if unbounded."""
    iters = 0
    bland = False
    degenerate_run = 0
    max_iters = 2000 + 60 * (m + allowed)
    while True:
        costs = tab[cost_row, :allowed]
        if bland:
            cand = np.nonzero(costs < -_PIVOT_TOL)[0]
            if cand.size == 0:
                return iters
            col = int(cand[0])
        else:
            col = int(np.argmin(costs))
            if costs[col] >= -_PIVOT_TOL:
                return iters
        column = tab[:m, col]
        pos = column > _PIVOT_TOL
        if not np.any(pos):
            return -(iters + 1)   # unbounded direction
        ratios = np.where(pos, tab[:m, -1] / np.where(pos, column, 1.0), np.inf)
        best = np.min(ratios)
        tie_rows = np.nonzero(ratios <= best + 1e-12)[0]
        row = int(tie_rows[np.argmin(basis[tie_rows])])   # Bland-compatible tie break

        before = tab[cost_row, -1]
        _pivot(tab, basis, row, col)
        iters += 1
        if abs(tab[cost_row, -1] - before) <= 1e-12 * max(1.0, abs(before)):
            degenerate_run += 1
            if degenerate_run >= _DEGENERATE_LIMIT:
                bland = True
        else:
            degenerate_run = 0
        if iters > max_iters:
            raise InternalError("simplex exceeded its iteration budget")
