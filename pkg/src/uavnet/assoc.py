"""User association (problem P2a): minimum total squared UAV-user distance
subject to per-user uniqueness, per-UAV capacity bounds, a minimum served
fraction, and the PLoS coverage radius — solved exactly by branch-and-bound
on the LP relaxation.

The coverage rule J_nl * ||V_n - W_l|| <= h_l / sin(theta_phi) involves only
fixed positions, so out-of-radius pairs are eliminated up front by fixing
their variables to zero (bound tightening), not by constraint rows.
"""

import heapq
import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import coverage_radius
from .errors import InsufficientFleetError
from .optim import INFEASIBLE, OPTIMAL, LinearProgram, solve_lp
from .scenario import Deployment, Position3, Scenario
from .seeding import rng_for

_INT_TOL = 1e-6
_PRUNE_TOL = 1e-9


@dataclass(frozen=True)
class Association:
    """Binary user-to-UAV matrix, shape (N, L)."""

    j: np.ndarray

    def serving_uav(self) -> np.ndarray:
        """Per-user serving UAV index, -1 for unserved users."""
        served = self.j.sum(axis=1) > 0
        out = np.where(served, self.j.argmax(axis=1), -1)
        return out.astype(int)

    def clusters(self) -> list:
        """User indices per UAV."""
        return [list(np.nonzero(self.j[:, l])[0]) for l in range(self.j.shape[1])]


@dataclass(frozen=True)
class AssocModel:
    lp: LinearProgram
    integrality: np.ndarray     # mask over LP variables (all True here)
    n_users: int
    n_uavs: int
    sqdist: np.ndarray          # raw squared distances, m^2, (N, L)
    in_radius: np.ndarray       # boolean (N, L)
    norm: float                 # cost normalization factor
    min_served: int


@dataclass
class AssocResult:
    status: str                 # "optimal" | "infeasible"
    association: Association | None = None
    objective_m2: float = math.nan
    lp_bound_m2: float = math.nan
    nodes: int = 0
    certificate: dict | None = None


def build_milp(scenario: Scenario, deployment: Deployment) -> AssocModel:
    """LP relaxation of P2a plus integrality mask.

    Rows: N per-user (<= 1 UAV), L capacity upper, L capacity lower,
    1 minimum-served — exactly N + 2L + 1.
    """
    users = scenario.users_xyz()
    uavs = deployment.positions_xyz()
    n, l = len(users), deployment.L
    diff = users[:, None, :] - uavs[None, :, :]
    sqdist = np.einsum("nlc,nlc->nl", diff, diff)
    radius = np.array([coverage_radius(w.h, scenario.phi, scenario.channel)
                       for w in deployment.positions])
    in_radius = np.sqrt(sqdist) <= radius[None, :] + 1e-9

    norm = float(sqdist[in_radius].max()) if in_radius.any() else 1.0
    norm = norm if norm > 0 else 1.0
    nv = n * l
    cost = sqdist.ravel() / norm
    # deterministic tie-break: prefer the lowest (n, l) index among equals
    cost = cost + 1e-9 * (np.arange(nv) / max(nv, 1))

    rows, rhs = [], []
    for u in range(n):                      # sum_l J[u, l] <= 1
        r = np.zeros(nv)
        r[u * l:(u + 1) * l] = 1.0
        rows.append(r)
        rhs.append(1.0)
    for j in range(l):                      # capacity upper / lower
        r = np.zeros(nv)
        r[j::l] = 1.0
        rows.append(r)
        rhs.append(float(scenario.c_max))
    for j in range(l):
        r = np.zeros(nv)
        r[j::l] = -1.0
        rows.append(r)
        rhs.append(-float(scenario.c_min))
    min_served = math.ceil(scenario.lam * n)
    rows.append(-np.ones(nv))               # sum J >= ceil(lambda N)
    rhs.append(-float(min_served))

    hi = in_radius.ravel().astype(float)    # out-of-radius pairs pinned to 0
    lp = LinearProgram(c=cost, a_ub=np.array(rows), b_ub=np.array(rhs),
                       lo=np.zeros(nv), hi=hi)
    return AssocModel(lp=lp, integrality=np.ones(nv, dtype=bool), n_users=n,
                      n_uavs=l, sqdist=sqdist, in_radius=in_radius, norm=norm,
                      min_served=min_served)


def _certificate(model: AssocModel) -> dict:
    uncovered = np.nonzero(~model.in_radius.any(axis=1))[0]
    capacity = model.n_uavs * int(model.lp.b_ub[model.n_users])
    return {
        "uncovered_users": [int(u) for u in uncovered],
        "total_capacity": capacity,
        "min_served": model.min_served,
        "covered_users": int(model.in_radius.any(axis=1).sum()),
    }


def solve_bnb(model: AssocModel) -> AssocResult:
    """Exact best-first branch-and-bound over the LP relaxation.

    Branches on the most fractional variable; node depth is bounded by the
    variable count since every branch fixes one binary variable.
    """
    root = solve_lp(model.lp)
    nodes = 1
    if root.status != OPTIMAL:
        return AssocResult(INFEASIBLE, nodes=nodes, certificate=_certificate(model))

    incumbent, incumbent_obj = None, math.inf
    counter = 0
    heap = [(root.objective, counter, model.lp, root)]
    lp_bound = root.objective
    while heap:
        bound, _, lp, res = heapq.heappop(heap)
        if bound >= incumbent_obj - _PRUNE_TOL:
            continue
        x = res.x
        frac = np.abs(x - np.round(x))
        frac[~model.integrality] = 0.0
        j_star = int(np.argmax(frac))
        if frac[j_star] <= _INT_TOL:
            obj = float(np.round(x) @ lp.c)
            if obj < incumbent_obj - _PRUNE_TOL:
                incumbent, incumbent_obj = np.round(x), obj
            continue
        for fix_to in (0.0, 1.0):
            lo = np.asarray(lp.lo, dtype=float).copy()
            hi = np.asarray(lp.hi, dtype=float).copy()
            lo[j_star] = fix_to
            hi[j_star] = fix_to
            if lo[j_star] > hi[j_star]:
                continue
            child = replace(lp, lo=lo, hi=hi)
            child_res = solve_lp(child)
            nodes += 1
            if child_res.status != OPTIMAL:
                continue
            if child_res.objective < incumbent_obj - _PRUNE_TOL:
                counter += 1
                heapq.heappush(heap, (child_res.objective, counter, child, child_res))

    if incumbent is None:
        return AssocResult(INFEASIBLE, nodes=nodes, certificate=_certificate(model))
    j = incumbent.reshape(model.n_users, model.n_uavs).astype(np.int8)
    return AssocResult(OPTIMAL, association=Association(j=j),
                       objective_m2=float((j.ravel() * model.sqdist.ravel()).sum()),
                       lp_bound_m2=lp_bound * model.norm, nodes=nodes)


def _grow_position(scenario: Scenario, deployment: Deployment, model: AssocModel) -> Position3:
    """Seed position for an extra UAV: centroid of uncovered users, nudged
    into the area and away from existing UAVs to respect d_o."""
    users = scenario.users_xyz()
    uncovered = np.nonzero(~model.in_radius.any(axis=1))[0]
    if uncovered.size:
        cx, cy = users[uncovered, 0].mean(), users[uncovered, 1].mean()
    else:
        rng = rng_for(scenario.seed, f"grow-uav-{deployment.L}")
        cx = 0.5 * (scenario.area.x_min + scenario.area.x_max) + rng.uniform(-50, 50)
        cy = 0.5 * (scenario.area.y_min + scenario.area.y_max) + rng.uniform(-50, 50)
    h = 0.5 * (scenario.h_min + scenario.h_max)
    pos = np.array([cx, cy, h])
    existing = deployment.positions_xyz()
    for _ in range(100):
        d = np.linalg.norm(existing - pos[None, :], axis=1)
        k = int(np.argmin(d))
        if d[k] >= scenario.d_o_m:
            break
        away = pos - existing[k]
        away = away / (np.linalg.norm(away) or 1.0)
        if not np.any(away):
            away = np.array([1.0, 0.0, 0.0])
        pos = existing[k] + away * scenario.d_o_m * 1.01
        pos[0] = np.clip(pos[0], scenario.area.x_min, scenario.area.x_max)
        pos[1] = np.clip(pos[1], scenario.area.y_min, scenario.area.y_max)
        pos[2] = np.clip(pos[2], scenario.h_min, scenario.h_max)
    return Position3(float(pos[0]), float(pos[1]), float(pos[2]))


def associate(scenario: Scenario, deployment: Deployment):
    """Associate users, activating extra UAVs while infeasible.

    Returns (Association, Deployment, AssocResult); raises
    InsufficientFleetError if still infeasible at L = M.
    """
    current = deployment
    while True:
        model = build_milp(scenario, current)
        result = solve_bnb(model)
        if result.status == OPTIMAL:
            return result.association, current, result
        if current.L >= scenario.M:
            raise InsufficientFleetError(
                f"no feasible association with all M={scenario.M} UAVs: {result.certificate}")
        new_pos = _grow_position(scenario, current, model)
        activation = list(current.activation)
        activation[activation.index(0)] = 1
        current = Deployment(L=current.L + 1, activation=tuple(activation),
                             positions=current.positions + (new_pos,))
