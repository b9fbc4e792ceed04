"""Per-UAV 3D placement (problem P2b) and inter-UAV separation repair.

For UAV l with cluster Q_l, minimize

    sum_{n in Q_l} (x_n - x)^2 + (y_n - y)^2 + h^2

subject to per-user PLoS coverage and box bounds.  The coverage set
{d_horiz <= h cot(theta_phi)} is encoded as the jointly convex
quadratic-over-linear constraint d_horiz^2 / h - cot^2(theta_phi) h <= 0
(for h > 0); the raw quadratic difference has an indefinite Hessian even
though the set is convex, which would break the log barrier.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, Position3, plos_inverse
from .errors import InfeasibleClusterError
from .optim import LinearBlock, FunctionObjective, SmoothConvexProgram, solve_barrier
from .scenario import Deployment, Scenario

CONSTRAINT_FORMS = ("geometric", "paper_literal")


@dataclass(frozen=True)
class PlacementProblem:
    users_xy: np.ndarray        # (Q, 2) ground positions of the cluster
    phi: float
    h_min: float
    h_max: float
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    channel: ChannelParams
    constraint_form: str = "geometric"

    def __post_init__(self):
        if len(self.users_xy) < 1:
            raise InfeasibleClusterError("cluster must contain at least one user")
        if self.constraint_form not in CONSTRAINT_FORMS:
            raise InfeasibleClusterError(f"constraint_form must be one of {CONSTRAINT_FORMS}")

    def radius_coef_sq(self) -> float:
        """c^2 with the coverage rule d_horiz^2 <= c^2 * h^2."""
        theta = np.radians(plos_inverse(self.phi, self.channel))
        if self.constraint_form == "geometric":
            return float(1.0 / np.sin(theta) ** 2 - 1.0)   # cot^2(theta)
        return float(1.0 / np.sin(theta) - 1.0)


class _CoverageBlock:
    """g_n(x, y, h) = ((x - x_n)^2 + (y - y_n)^2)/h - c2*h <= 0."""

    def __init__(self, users_xy, c2):
        self.u = users_xy
        self.c2 = c2

    def __len__(self):
        return len(self.u)

    def value(self, z):
        dx = z[0] - self.u[:, 0]
        dy = z[1] - self.u[:, 1]
        return (dx**2 + dy**2) / z[2] - self.c2 * z[2]

    def grad(self, z):
        h = z[2]
        dx = z[0] - self.u[:, 0]
        dy = z[1] - self.u[:, 1]
        g = np.empty((len(self.u), 3))
        g[:, 0] = 2.0 * dx / h
        g[:, 1] = 2.0 * dy / h
        g[:, 2] = -(dx**2 + dy**2) / h**2 - self.c2
        return g

    def hess_weighted(self, z, w):
        h = z[2]
        dx = z[0] - self.u[:, 0]
        dy = z[1] - self.u[:, 1]
        sw = w.sum()
        sx = (w * dx).sum()
        sy = (w * dy).sum()
        sq = (w * (dx**2 + dy**2)).sum()
        out = np.zeros((3, 3))
        out[0, 0] = 2.0 * sw / h
        out[1, 1] = 2.0 * sw / h
        out[0, 2] = out[2, 0] = -2.0 * sx / h**2
        out[1, 2] = out[2, 1] = -2.0 * sy / h**2
        out[2, 2] = 2.0 * sq / h**3
        return out


def optimal_position(problem: PlacementProblem) -> Position3:
    """Solve the placement QCQP for one cluster via the log barrier."""
    scale = max(problem.x_max - problem.x_min, problem.y_max - problem.y_min,
                problem.h_max, 1.0)
    users = problem.users_xy / scale
    h_lo, h_hi = problem.h_min / scale, problem.h_max / scale
    x_lo, x_hi = problem.x_min / scale, problem.x_max / scale
    y_lo, y_hi = problem.y_min / scale, problem.y_max / scale
    c2 = problem.radius_coef_sq()
    q = len(users)

    # start-point center: centroid, or the farthest-pair midpoint if the
    # centroid cannot reach the whole cluster from h_max
    cx, cy = users[:, 0].mean(), users[:, 1].mean()
    if q > 1:
        diff = users[:, None, :] - users[None, :, :]
        pair_d = np.linalg.norm(diff, axis=2)
        i0, j0 = np.unravel_index(np.argmax(pair_d), pair_d.shape)
        mx, my = 0.5 * (users[i0] + users[j0])
        if np.hypot(users[:, 0] - cx, users[:, 1] - cy).max() \
                > np.hypot(users[:, 0] - mx, users[:, 1] - my).max():
            cx, cy = float(mx), float(my)
    d_h = np.hypot(users[:, 0] - cx, users[:, 1] - cy)
    h_req = float(d_h.max() / np.sqrt(c2))
    if h_req > h_hi + 1e-12:
        worst = int(np.argmax(d_h))
        raise InfeasibleClusterError(
            f"cluster spread needs altitude {h_req * scale:.1f} m > h_max", worst_user=worst)

    # strictly feasible start: centroid, altitude 5% above the binding height
    delta = 1e-7 * max(h_hi - h_lo, 1e-9)
    lo_h = max(h_lo, h_req)
    h0 = min(max(1.05 * h_req, lo_h + delta), h_hi - delta)
    if not (lo_h < h0 < h_hi):
        h0 = 0.5 * (lo_h + h_hi)
    x0 = np.array([np.clip(cx, x_lo + delta, x_hi - delta),
                   np.clip(cy, y_lo + delta, y_hi - delta), h0])

    def value(z):
        return float(((users[:, 0] - z[0])**2 + (users[:, 1] - z[1])**2).sum() + q * z[2]**2)

    def deriv(z):
        g = np.array([2.0 * (q * z[0] - users[:, 0].sum()),
                      2.0 * (q * z[1] - users[:, 1].sum()),
                      2.0 * q * z[2]])
        return value(z), g, np.diag([2.0 * q, 2.0 * q, 2.0 * q])

    box = LinearBlock(
        np.array([[-1.0, 0, 0], [1.0, 0, 0], [0, -1.0, 0], [0, 1.0, 0], [0, 0, -1.0], [0, 0, 1.0]]),
        np.array([-x_lo, x_hi, -y_lo, y_hi, -h_lo, h_hi]))
    blocks = [box, _CoverageBlock(users, c2)]
    res = solve_barrier(SmoothConvexProgram(
        objective=FunctionObjective(value, deriv), blocks=blocks, x0=x0))
    z = res.x * scale
    return Position3(float(z[0]), float(z[1]), float(z[2]))


def enforce_separation(positions, d_o: float, area, h_min: float, h_max: float):
    """Push apart UAV pairs closer than d_o (3D), symmetric displacement,
    re-clamped to bounds; at most 100 sweeps.

    Returns (positions', moved_flags, satisfied).
    """
    pts = np.array([p.as_array() for p in positions], dtype=float)
    n = len(pts)
    moved = np.zeros(n, dtype=bool)
    satisfied = True
    if n >= 2 and d_o > 0:
        for _ in range(100):
            for i in range(n - 1):
                for j in range(i + 1, n):
                    delta = pts[j] - pts[i]
                    dist = float(np.linalg.norm(delta))
                    if dist >= d_o:
                        continue
                    if dist < 1e-12:
                        direction = np.array([1.0, 0.0, 0.0])   # deterministic axis
                    else:
                        direction = delta / dist
                    push = 0.5 * (d_o - dist)
                    pts[i] -= direction * push
                    pts[j] += direction * push
                    for k in (i, j):
                        pts[k, 0] = np.clip(pts[k, 0], area.x_min, area.x_max)
                        pts[k, 1] = np.clip(pts[k, 1], area.y_min, area.y_max)
                        pts[k, 2] = np.clip(pts[k, 2], h_min, h_max)
                    moved[i] = moved[j] = True
            diffs = pts[:, None, :] - pts[None, :, :]
            dists = np.linalg.norm(diffs, axis=2) + np.eye(n) * (d_o + 1.0)
            if dists.min() >= d_o - 1e-9:
                break
        satisfied = bool(dists.min() >= d_o - 1e-9)
    out = tuple(Position3(float(p[0]), float(p[1]), float(p[2])) for p in pts)
    return out, moved, satisfied


def place_all(scenario: Scenario, association, prev_deployment: Deployment):
    """Re-place every UAV at its cluster optimum, then repair separation.

    UAVs with empty clusters keep their previous position.  Returns
    (Deployment, info dict with moved flags and separation status).
    """
    users = scenario.users_xyz()
    clusters = association.clusters()
    new_positions = []
    for l, members in enumerate(clusters):
        if not members:
            new_positions.append(prev_deployment.positions[l])
            continue
        problem = PlacementProblem(
            users_xy=users[members, :2], phi=scenario.phi,
            h_min=scenario.h_min, h_max=scenario.h_max,
            x_min=scenario.area.x_min, x_max=scenario.area.x_max,
            y_min=scenario.area.y_min, y_max=scenario.area.y_max,
            channel=scenario.channel)
        new_positions.append(optimal_position(problem))
    positions, moved, ok = enforce_separation(
        new_positions, scenario.d_o_m, scenario.area, scenario.h_min, scenario.h_max)
    deployment = Deployment(L=prev_deployment.L, activation=prev_deployment.activation,
                            positions=positions)
    return deployment, {"separation_moved": moved.tolist(), "separation_ok": ok}
