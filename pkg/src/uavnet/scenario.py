"""Problem-instance construction: user drops, validation, UAV-count estimate."""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelParams, Position3
from .errors import ConfigError
from .seeding import rng_for


@dataclass(frozen=True)
class Area:
    x_min: float = 0.0
    x_max: float = 1000.0
    y_min: float = 0.0
    y_max: float = 1000.0

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance.

    Unstated-by-the-literature defaults (P_max 1 W, R_min 1 Mbps, d_o 100 m,
    altitudes 50..500 m, M = 2 * initial UAV estimate) are plain config keys;
    experiment configs override them explicitly.
    """

    users: tuple            # tuple[Position3], h = 0
    area: Area = field(default_factory=Area)
    h_min: float = 50.0
    h_max: float = 500.0
    K: int = 8              # sub-carriers per cell
    M: int = 0              # available UAVs; 0 -> 2 * estimate
    lam: float = 1.0        # fraction of users that must be served
    c_min: int = 0
    c_max: int = 0          # 0 -> K (per-cell capacity equals sub-carriers)
    p_max_w: float = 1.0
    r_min_bps: float = 1e6
    d_o_m: float = 100.0
    phi: float = 0.8
    channel: ChannelParams = field(default_factory=ChannelParams)
    seed: int = 0

    def __post_init__(self):
        # invalid instances are constructible on purpose: validate() reports them
        if self.c_max == 0:
            object.__setattr__(self, "c_max", self.K)
        if self.M == 0 and self.users and self.c_max >= 1 and 0.0 < self.lam <= 1.0:
            est = estimate_num_uavs(len(self.users), self.lam, self.c_max)
            object.__setattr__(self, "M", 2 * est)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def users_xyz(self) -> np.ndarray:
        return np.array([u.as_array() for u in self.users])


@dataclass(frozen=True)
class Deployment:
    """Active UAV set: count L, activation vector over the fleet, 3D positions."""

    L: int
    activation: tuple       # tuple[int], length M
    positions: tuple        # tuple[Position3], length L

    def __post_init__(self):
        if sum(self.activation) != self.L or len(self.positions) != self.L:
            raise ConfigError("activation vector inconsistent with L")

    def positions_xyz(self) -> np.ndarray:
        return np.array([w.as_array() for w in self.positions])


def estimate_num_uavs(n_users: int, lam: float, c_max: int) -> int:
    """Initial UAV count ceil(lambda * N / C_max), at least 1."""
    if n_users < 1 or c_max < 1:
        raise ConfigError("need n_users >= 1 and c_max >= 1")
    if not (0.0 < lam <= 1.0):
        raise ConfigError("lambda must be in (0, 1]")
    return max(1, math.ceil(lam * n_users / c_max))


def generate(config: dict, seed: int) -> Scenario:
    """Scenario with N users i.i.d. uniform over the area; pure in (config, seed)."""
    cfg = dict(config)
    n = int(cfg.pop("n_users"))
    if n < 1:
        raise ConfigError("n_users must be >= 1")
    area = cfg.get("area", Area())
    if isinstance(area, dict):
        area = Area(**area)
    cfg["area"] = area
    if area.x_max <= area.x_min or area.y_max <= area.y_min:
        raise ConfigError("degenerate area bounds")
    channel = cfg.get("channel", ChannelParams())
    if isinstance(channel, dict):
        channel = ChannelParams(**channel)
    cfg["channel"] = channel
    rng = rng_for(seed, "user-drop")
    xs = rng.uniform(area.x_min, area.x_max, size=n)
    ys = rng.uniform(area.y_min, area.y_max, size=n)
    users = tuple(Position3(float(x), float(y), 0.0) for x, y in zip(xs, ys))
    return Scenario(users=users, seed=seed, **cfg)


def validate(scenario: Scenario) -> list:
    """All violated invariants as human-readable strings; empty when valid."""
    out = []
    if scenario.n_users < 1:
        out.append("scenario has no users")
    for i, u in enumerate(scenario.users):
        if u.h != 0.0:
            out.append(f"user {i} not on the ground (h={u.h})")
        if not scenario.area.contains(u.x, u.y):
            out.append(f"user {i} outside area bounds")
    if not (0.0 < scenario.lam <= 1.0):
        out.append("lambda must be in (0, 1]")
    if scenario.c_min < 0 or scenario.c_min > scenario.c_max:
        out.append("capacity bounds must satisfy 0 <= c_min <= c_max")
    if scenario.c_max > scenario.K:
        out.append("c_max exceeds K: per-cell capacity is capped by sub-carriers (C3/C4 coupling)")
    if scenario.K < 1:
        out.append("K must be >= 1")
    if scenario.M < 1:
        out.append("fleet size M must be >= 1")
    if not (0.0 < scenario.h_min <= scenario.h_max):
        out.append("altitude bounds must satisfy 0 < h_min <= h_max")
    if scenario.d_o_m < 0:
        out.append("minimum UAV separation must be >= 0")
    if scenario.p_max_w <= 0:
        out.append("p_max_w must be > 0")
    if scenario.r_min_bps < 0:
        out.append("r_min_bps must be >= 0")
    if not (0.0 < scenario.phi < 1.0):
        out.append("phi must be in (0, 1)")
    return out


def with_users(scenario: Scenario, users) -> Scenario:
    return replace(scenario, users=tuple(users))
