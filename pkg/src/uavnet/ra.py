"""Joint sub-carrier and power allocation (problem P3) via successive
convex approximation.

The non-convex sum-rate problem is lifted with per-user rate auxiliaries
eta and log-interference auxiliaries s:

    sum_k ln(Phi + sigma^2 + p g)  >=  ln(2) eta / B + sum_k s        (rate)
    Phi + sigma^2                  <=  e^s                            (DC)
    eta                            >=  J * R_min                      (QoS)

and the DC constraint is convexified at the incumbent s_o:
Phi + sigma^2 <= e^{s_o} (s - s_o + 1).  Each SCA round solves the convex
inner problem, then re-linearizes at the solution until sum eta stalls.

Internally the inner problem is collapsed onto the powers alone (exact
elimination: s sits at its tightened bound, eta at its rate bound, and the
relaxed A equals p / P_max), which keeps the Newton dimension at
S*K instead of S(1+3K).  The eliminated variables are recovered in closed
form afterwards and all invariants are asserted on them.  Powers are
normalized by P_max and gains by P_max / sigma^2, so solver magnitudes
stay O(1..1e4) regardless of the link budget.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import LinkGains, all_user_rates
from .errors import ContractError, InternalError
from .optim import (
    OPTIMAL,
    FunctionObjective,
    LinearBlock,
    LinearProgram,
    SmoothConvexProgram,
    solve_barrier,
    solve_lp,
)
from .optim.barrier import NonnegBlock

SCA_REL_TOL = 1e-3
SCA_MAX_ITERS = 50
_INTERIOR_EPS = 1e-9
_LN2 = math.log(2.0)

STATUS_OK = "ok"
STATUS_QOS_INFEASIBLE = "qos_infeasible"


@dataclass(frozen=True)
class Allocation:
    """Sub-carrier matrix A and power tensor P, both (N, K, L).

    A is in [0, 1] during the SCA relaxation and binary after rounding;
    P is in watts.
    """

    a: np.ndarray
    p: np.ndarray

    def is_binary(self) -> bool:
        return bool(np.all(np.abs(self.a - np.round(self.a)) < 1e-9))


@dataclass
class ScaState:
    """Iteration state of Algorithm 2 (all per served user)."""

    users: tuple               # served user indices
    cells: tuple               # serving cell per served user
    eta: np.ndarray            # (S,) bit/s
    s: np.ndarray              # (S, K) log-scale interference auxiliaries, ln(W) scale
    s_o: np.ndarray            # (S, K) current linearization point
    allocation: Allocation     # strictly feasible incumbent
    iteration: int = 0
    trace: list = field(default_factory=list)   # sum eta per iteration, bit/s
    status: str = STATUS_OK
    worst_user: int | None = None


def allocation_violations(alloc: Allocation, association, scenario) -> list:
    """All violated Allocation invariants (C5..C8 plus binaries), as strings."""
    a, p = alloc.a, alloc.p
    out = []
    tol = 1e-9
    pmax = scenario.p_max_w
    if np.any(p < -tol * pmax):
        out.append("negative power entries (C14)")
    if np.any(p > a * pmax + tol * pmax):
        out.append("power exceeds A * P_max masking (C5)")
    if np.any(p.sum(axis=(0, 1)) > pmax * (1 + tol)):
        out.append("per-UAV power budget exceeded (C6)")
    if np.any(a.sum(axis=1) > association.j + tol):
        out.append("carriers allocated without association (C7)")
    if np.any(a.sum(axis=0) > 1 + tol):
        out.append("sub-carrier shared inside a cell (C8)")
    return out


class _RaCore:
    """Compact, normalized view of the inner problem over powers x = p/P_max."""

    def __init__(self, scenario, association, gains: LinkGains, owned_mask: np.ndarray):
        self.scenario = scenario
        self.association = association
        serving = association.serving_uav()
        self.users = np.nonzero(serving >= 0)[0]
        self.cells = serving[self.users]
        s_count = self.users.size
        k = scenario.K
        self.S, self.K = s_count, k
        sigma2 = scenario.channel.noise_power_w
        self.pmax = scenario.p_max_w
        self.bandwidth = scenario.channel.bandwidth_hz
        self.ghat = gains.gain[self.users] * (self.pmax / sigma2)   # (S, K, L)
        self.gown = self.ghat[np.arange(s_count), :, self.cells]    # (S, K)

        # variable layout: one power per owned (user, carrier) pair
        pairs = np.argwhere(owned_mask[self.users])                 # rows (i, k)
        self.pair_user = pairs[:, 0]
        self.pair_k = pairs[:, 1]
        self.pair_cell = self.cells[self.pair_user]
        self.nv = len(pairs)
        self.var_of = -np.ones((s_count, k), dtype=int)
        self.var_of[self.pair_user, self.pair_k] = np.arange(self.nv)

        # per-carrier coupling matrices: u[:, k] = 1 + W_k x_k, PhiP1 = 1 + Wc_k x_k
        self.k_vars = [np.nonzero(self.pair_k == kk)[0] for kk in range(k)]
        self.w_full, self.w_cross = [], []
        for kk in range(k):
            idx = self.k_vars[kk]
            cross = self.ghat[:, kk, :][:, self.pair_cell[idx]]     # (S, m_k)
            cross[self.cells[:, None] == self.pair_cell[idx][None, :]] = 0.0
            full = cross.copy()
            owners = self.pair_user[idx]
            full[owners, np.arange(idx.size)] += self.gown[owners, kk]
            self.w_full.append(full)
            self.w_cross.append(cross)

        self.active_cells = np.unique(self.pair_cell) if self.nv else np.array([], dtype=int)
        self._cache_key = None
        self._cache = None

    # -- linearization -------------------------------------------------
    def set_linearization(self, s_o_norm: np.ndarray):
        self.s_o = s_o_norm
        self.c1 = np.exp(-s_o_norm)
        self._cache_key = None

    def phi_p1(self, x):
        out = np.ones((self.S, self.K))
        for kk in range(self.K):
            idx = self.k_vars[kk]
            if idx.size:
                out[:, kk] += self.w_cross[kk] @ x[idx]
        return out

    def _eval(self, x):
        key = x.tobytes()
        if key == self._cache_key:
            return self._cache
        u = np.ones((self.S, self.K))
        phi_p1 = np.ones((self.S, self.K))
        for kk in range(self.K):
            idx = self.k_vars[kk]
            if idx.size:
                u[:, kk] += self.w_full[kk] @ x[idx]
                phi_p1[:, kk] += self.w_cross[kk] @ x[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            log_u = np.log(u)
        s_hat = self.s_o - 1.0 + phi_p1 * self.c1
        y = (log_u - s_hat).sum(axis=1)
        self._cache_key, self._cache = key, (u, phi_p1, y)
        return self._cache

    # -- objective: minimize -sum_i y_i --------------------------------
    def obj_value(self, x):
        _, _, y = self._eval(x)
        return float(-y.sum())

    def obj_deriv(self, x):
        u, _, y = self._eval(x)
        grad = np.zeros(self.nv)
        hess = np.zeros((self.nv, self.nv))
        inv_u = 1.0 / u
        for kk in range(self.K):
            idx = self.k_vars[kk]
            if not idx.size:
                continue
            wf, wc = self.w_full[kk], self.w_cross[kk]
            grad[idx] = -wf.T @ inv_u[:, kk] + wc.T @ self.c1[:, kk]
            hess[np.ix_(idx, idx)] = (wf * (inv_u[:, kk] ** 2)[:, None]).T @ wf
        return float(-y.sum()), grad, hess

    def rate_rows(self, x):
        """Jacobian of y (rows: served users), shape (S, nv)."""
        u, _, _ = self._eval(x)
        rows = np.zeros((self.S, self.nv))
        inv_u = 1.0 / u
        for kk in range(self.K):
            idx = self.k_vars[kk]
            if not idx.size:
                continue
            rows[:, idx] = self.w_full[kk] * inv_u[:, kk][:, None] \
                - self.c1[:, kk][:, None] * self.w_cross[kk]
        return rows

    def qos_hess_weighted(self, x, w):
        u, _, _ = self._eval(x)
        out = np.zeros((self.nv, self.nv))
        inv_u2 = 1.0 / u**2
        for kk in range(self.K):
            idx = self.k_vars[kk]
            if not idx.size:
                continue
            wf = self.w_full[kk]
            out[np.ix_(idx, idx)] = (wf * (w * inv_u2[:, kk])[:, None]).T @ wf
        return out

    # -- tensor scatter / gather ---------------------------------------
    def scatter(self, x, binary_a: bool):
        n = self.association.j.shape[0]
        l = self.association.j.shape[1]
        a = np.zeros((n, self.K, l))
        p = np.zeros((n, self.K, l))
        uu = self.users[self.pair_user]
        p[uu, self.pair_k, self.pair_cell] = x * self.pmax
        if binary_a:
            a[uu, self.pair_k, self.pair_cell] = 1.0
        else:
            a[uu, self.pair_k, self.pair_cell] = x
        return Allocation(a=a, p=p)

    def gather(self, alloc: Allocation):
        uu = self.users[self.pair_user]
        return alloc.p[uu, self.pair_k, self.pair_cell] / self.pmax


class _QosBlock:
    """g_i = y_min_i - y_i(x) <= 0 for every served user."""

    def __init__(self, core: _RaCore, y_min: np.ndarray):
        self.core = core
        self.y_min = y_min

    def __len__(self):
        return self.core.S

    def value(self, x):
        _, _, y = self.core._eval(x)
        return self.y_min - y

    def grad(self, x):
        return -self.core.rate_rows(x)

    def hess_weighted(self, x, w):
        return self.core.qos_hess_weighted(x, w)


def _owned_from_allocation(alloc: Allocation, association, scenario) -> np.ndarray:
    serving = association.serving_uav()
    n, k = alloc.a.shape[0], alloc.a.shape[1]
    owned = np.zeros((n, k), dtype=bool)
    for u in range(n):
        if serving[u] >= 0:
            owned[u] = alloc.a[u, :, serving[u]] > 0.5
    return owned


def _greedy_carriers(scenario, association, gains) -> np.ndarray:
    """One distinct carrier per served user within its cluster, greedy by
    descending gain then index; returns owned mask (N, K)."""
    serving = association.serving_uav()
    n, k = len(serving), scenario.K
    owned = np.zeros((n, k), dtype=bool)
    for l, members in enumerate(association.clusters()):
        if not members:
            continue
        if len(members) > k:
            raise ContractError(f"cluster {l} exceeds the sub-carrier count")
        order = sorted(members, key=lambda u: (-gains.gain[u, :, l].max(), u))
        taken = np.zeros(k, dtype=bool)
        for u in order:
            pref = sorted(range(k), key=lambda kk: (-gains.gain[u, kk, l], kk))
            for kk in pref:
                if not taken[kk]:
                    owned[u, kk] = True
                    taken[kk] = True
                    break
    return owned


def init_feasible(scenario, association, gains: LinkGains):
    """Strictly feasible starting point for Algorithm 2.

    Each served user gets one distinct carrier (greedy by gain, then index)
    and power 0.8 * P_max / |Q_l|; s_o is ln(Phi + sigma^2) at that power
    and eta the rates it achieves.
    """
    owned = _greedy_carriers(scenario, association, gains)
    core = _RaCore(scenario, association, gains, owned)
    cluster_size = np.array([len(np.nonzero(association.j[:, c])[0]) for c in core.cells])
    x0 = np.zeros(core.nv)
    x0[:] = 0.8 / cluster_size[core.pair_user]
    s_o = np.log(core.phi_p1(x0))
    core.set_linearization(s_o)
    _, _, y = core._eval(x0)
    alloc = core.scatter(x0, binary_a=True)
    eta = core.bandwidth * y / _LN2
    sigma2 = scenario.channel.noise_power_w
    state = ScaState(users=tuple(core.users), cells=tuple(core.cells), eta=eta,
                     s=s_o + math.log(sigma2), s_o=s_o + math.log(sigma2),
                     allocation=alloc, iteration=0, trace=[float(eta.sum())])
    return alloc, state


def solve_inner(scenario, association, gains, sca: ScaState, relax_a: bool):
    """One convex inner problem at the incumbent linearization.

    Maximizes sum eta subject to the convexified rate/DC/QoS constraints and
    the allocation polytope; A is relaxed to [0,1] when `relax_a`, else kept
    at the incumbent's binary pattern.  Solved by the log-barrier method on
    the power-collapsed exact reformulation.
    """
    n, k = association.j.shape[0], scenario.K
    if relax_a:
        serving = association.serving_uav()
        owned = np.zeros((n, k), dtype=bool)
        owned[serving >= 0] = True
    else:
        owned = _owned_from_allocation(sca.allocation, association, scenario)
    core = _RaCore(scenario, association, gains, owned)
    sigma2 = scenario.channel.noise_power_w

    # start from the incumbent powers, nudged strictly inside
    x0 = core.gather(sca.allocation)
    x0 = np.maximum(x0, _INTERIOR_EPS)
    for cell in core.active_cells:
        mask = core.pair_cell == cell
        total = x0[mask].sum()
        if total >= 1.0 - 1e-7:
            x0[mask] *= (1.0 - 1e-6) / total

    s_o_norm = np.log(core.phi_p1(x0)) if sca.iteration == 0 and not np.any(sca.s_o) \
        else np.asarray(sca.s_o) - math.log(sigma2)
    core.set_linearization(s_o_norm)

    y_min = np.full(core.S, scenario.r_min_bps * _LN2 / core.bandwidth)
    _, _, y0 = core._eval(x0)
    margin = y0 - y_min
    if np.any(margin <= 0):
        worst = int(core.users[np.argmin(margin)])
        out_state = replace(sca, status=STATUS_QOS_INFEASIBLE, worst_user=worst)
        return sca.allocation, out_state

    budget_rows = np.zeros((core.active_cells.size, core.nv))
    for r, cell in enumerate(core.active_cells):
        budget_rows[r, core.pair_cell == cell] = 1.0
    blocks = [NonnegBlock(core.nv), LinearBlock(budget_rows, np.ones(core.active_cells.size))]
    if relax_a is False:
        blocks.append(LinearBlock(np.eye(core.nv), np.ones(core.nv)))   # C5 with a = 1
    blocks.append(_QosBlock(core, y_min))

    objective = FunctionObjective(core.obj_value, core.obj_deriv)
    result = solve_barrier(SmoothConvexProgram(objective=objective, blocks=blocks, x0=x0))

    x = result.x
    u, phi_p1, y = core._eval(x)
    s_norm = core.s_o - 1.0 + phi_p1 * core.c1         # Eq.(12b) tight
    if np.any(np.exp(s_norm) < phi_p1 * (1 - 1e-9)):
        raise InternalError("inner approximation produced e^s < Phi + sigma^2")
    eta = core.bandwidth * y / _LN2
    alloc = core.scatter(x, binary_a=not relax_a)
    state = ScaState(users=tuple(core.users), cells=tuple(core.cells), eta=eta,
                     s=s_norm + math.log(sigma2), s_o=np.asarray(sca.s_o, dtype=float),
                     allocation=alloc, iteration=sca.iteration, trace=list(sca.trace),
                     status=STATUS_OK)
    return alloc, state


def sca_loop(scenario, association, gains, relax_a: bool = True):
    """Algorithm 2: iterate solve_inner, re-linearizing at each solution,
    until sum eta stalls; then round A to a per-cell matching and run one
    fixed-A polish of the powers.

    Returns (Allocation, ScaState, trace).
    """
    alloc, state = init_feasible(scenario, association, gains)
    last = state.trace[-1]
    for it in range(1, SCA_MAX_ITERS + 1):
        alloc, new_state = solve_inner(scenario, association, gains, state, relax_a=relax_a)
        if new_state.status != STATUS_OK:
            new_state.trace = list(state.trace)
            return alloc, new_state, list(state.trace)
        total = float(new_state.eta.sum())
        slack = 1e-9 * max(1.0, abs(last))
        if total < last - slack:
            raise InternalError(f"SCA objective decreased: {last} -> {total}")
        new_state.iteration = it
        new_state.trace = state.trace + [total]
        new_state.s_o = new_state.s.copy()             # re-linearize at s*
        state = new_state
        if abs(total - last) < SCA_REL_TOL * max(abs(total), 1e-12):
            last = total
            break
        last = total

    rounded = round_allocation(alloc, association, gains, scenario)
    polish_state = replace(state, allocation=rounded, s_o=np.zeros_like(state.s_o),
                           iteration=0, trace=list(state.trace))
    alloc, final_state = solve_inner(scenario, association, gains, polish_state, relax_a=False)
    final_state.iteration = state.iteration
    final_state.trace = list(state.trace)
    return alloc, final_state, list(final_state.trace)


def round_allocation(relaxed: Allocation, association, gains, scenario) -> Allocation:
    """Recover a binary A via per-UAV maximum-weight user/carrier matching.

    Weights are the relaxed A values with gain-then-index tie-breaks; the
    matching is the assignment LP (integral polytope) solved with the
    simplex kernel.  Powers are masked to the matched carriers and rescaled
    to respect the per-UAV budget.
    """
    n, k, l_count = relaxed.a.shape
    a = np.zeros_like(relaxed.a)
    p = np.zeros_like(relaxed.p)
    gmax = float(gains.gain.max())
    for l in range(l_count):
        members = list(np.nonzero(association.j[:, l])[0])
        if not members:
            continue
        nu = len(members)
        w = relaxed.a[members, :, l].astype(float).copy()
        gn = gains.gain[members, :, l] / gmax
        rank = np.arange(nu * k).reshape(nu, k) / (nu * k)
        w = w + 1e-7 * gn + 1e-10 * (1.0 - rank)
        nv = nu * k
        a_eq = np.zeros((nu, nv))
        for i in range(nu):
            a_eq[i, i * k:(i + 1) * k] = 1.0
        a_ub = np.zeros((k, nv))
        for kk in range(k):
            a_ub[kk, kk::k] = 1.0
        lp = LinearProgram(c=-w.ravel(), a_eq=a_eq, b_eq=np.ones(nu),
                           a_ub=a_ub, b_ub=np.ones(k), lo=np.zeros(nv), hi=np.ones(nv))
        res = solve_lp(lp)
        if res.status != OPTIMAL:
            raise InternalError(f"assignment LP for cell {l} returned {res.status}")
        match = np.round(res.x.reshape(nu, k))
        for i, u in enumerate(members):
            kk = int(np.argmax(match[i]))
            if match[i, kk] > 0.5:
                a[u, kk, l] = 1.0
                p[u, kk, l] = relaxed.p[u, kk, l]
    total = p.sum(axis=(0, 1))
    over = total > scenario.p_max_w
    for l in np.nonzero(over)[0]:
        p[:, :, l] *= scenario.p_max_w / total[l]
    return Allocation(a=a, p=p)


def evaluate(alloc: Allocation, association, gains, scenario) -> dict:
    """Rates, sum rate, per-UAV ratio and QoS flags for a binary allocation."""
    violations = allocation_violations(alloc, association, scenario)
    if violations:
        raise ContractError("; ".join(violations))
    serving = association.serving_uav()
    rates_nl = all_user_rates(alloc.p, gains, scenario.channel)     # (N, L)
    per_user = np.zeros(len(serving))
    mask = serving >= 0
    per_user[mask] = rates_nl[mask, serving[mask]]
    l_count = association.j.shape[1]
    total = float(per_user.sum())
    qos = np.where(mask, per_user >= scenario.r_min_bps - 1e-9, True)
    return {
        "per_user_rate_bps": per_user,
        "sum_rate_bps": total,
        "upsilon": total / l_count,
        "qos_ok": qos,
        "served": mask,
    }
