"""Air-to-ground channel model.

Elevation-angle geometry, LoS probability, mixed LoS/NLoS path loss,
link gains with optional Rayleigh fading, co-channel SINR and per-user
achievable rate.

Path loss between a UAV at altitude h and a ground user at 3D distance d:

    PL = K_o * d^alpha * [PLoS * xi_los + (1 - PLoS) * xi_nlos]

with K_o = (4*pi*f_c / c)^2 and xi_* the excess attenuation factors
(configured in dB, applied linearly).  The LoS probability is the standard
elevation-angle sigmoid

    PLoS(theta) = 1 / (1 + b1 * exp(-b2 * (theta - b1)))      (default)

with theta in degrees; the literal variant without the leading "1 +"
(clamped at 1) is selectable via ``plos_form="paper_literal"``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError, GeometryError, InfeasibleThresholdError
from .seeding import rng_for

SPEED_OF_LIGHT = 299_792_458.0  # m/s

PLOS_FORMS = ("sigmoid", "paper_literal")
FADING_MODES = ("off", "rayleigh")


@dataclass(frozen=True)
class ChannelParams:
    """Channel configuration; all SI units, attenuations in dB."""

    carrier_freq_hz: float = 1e9
    pathloss_exponent: float = 4.0
    env_b1: float = 4.88
    env_b2: float = 0.43
    atten_los_db: float = 1.0
    atten_nlos_db: float = 20.0
    noise_power_w: float = 1e-4
    bandwidth_hz: float = 1e6
    plos_form: str = "sigmoid"
    fading_mode: str = "off"

    def __post_init__(self):
        if self.carrier_freq_hz <= 0:
            raise DomainError("carrier_freq_hz must be > 0")
        if self.pathloss_exponent < 1:
            raise DomainError("pathloss_exponent must be >= 1")
        if self.env_b1 <= 0 or self.env_b2 <= 0:
            raise DomainError("environment constants b1, b2 must be > 0")
        if self.noise_power_w <= 0:
            raise DomainError("noise_power_w must be > 0")
        if self.bandwidth_hz <= 0:
            raise DomainError("bandwidth_hz must be > 0")
        if not (self.atten_nlos_db >= self.atten_los_db >= 0):
            raise DomainError("attenuations must satisfy nlos_db >= los_db >= 0")
        if self.plos_form not in PLOS_FORMS:
            raise DomainError(f"plos_form must be one of {PLOS_FORMS}")
        if self.fading_mode not in FADING_MODES:
            raise DomainError(f"fading_mode must be one of {FADING_MODES}")

    @property
    def k_o(self) -> float:
        """Free-space reference factor (4*pi*f_c/c)^2, linear."""
        return (4.0 * np.pi * self.carrier_freq_hz / SPEED_OF_LIGHT) ** 2


@dataclass(frozen=True)
class Position3:
    """3D position in meters; ground users have h = 0."""

    x: float
    y: float
    h: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y) and np.isfinite(self.h)):
            raise GeometryError("coordinates must be finite")
        if self.h < 0:
            raise GeometryError("altitude must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.h], dtype=float)


@dataclass(frozen=True)
class LinkGains:
    """Per-link channel gains.

    gain[n, k, l] = fading_mag_sq[n, k, l] / pathloss[n, l]; all linear.
    """

    gain: np.ndarray           # (N, K, L)
    pathloss: np.ndarray       # (N, L)
    fading_mag_sq: np.ndarray  # (N, K, L)

    def __post_init__(self):
        if np.any(self.gain <= 0) or np.any(self.pathloss <= 0) or np.any(self.fading_mag_sq <= 0):
            raise ContractError("link gains, path losses and fading powers must be > 0")


def elevation_angle(uav: Position3, ue: Position3) -> float:
    """Elevation angle (degrees) from the user towards the UAV.

    arctan(h / d_horiz); 90 deg when the UAV is directly overhead.
    """
    if uav.h <= 0:
        raise GeometryError("UAV altitude must be > 0")
    d_h = np.hypot(uav.x - ue.x, uav.y - ue.y)
    if d_h == 0.0:
        return 90.0
    return float(np.degrees(np.arctan((uav.h - ue.h) / d_h)))


def plos(theta: float, params: ChannelParams) -> float:
    """LoS probability at elevation angle theta (degrees)."""
    if not (0.0 < theta <= 90.0):
        raise DomainError("theta must be in (0, 90] degrees")
    b1, b2 = params.env_b1, params.env_b2
    expo = np.exp(-b2 * (theta - b1))
    if params.plos_form == "sigmoid":
        return float(1.0 / (1.0 + b1 * expo))
    return float(min(1.0, 1.0 / (b1 * expo)))


def plos_inverse(phi: float, params: ChannelParams) -> float:
    """Angle theta_phi (degrees) with plos(theta_phi) = phi.

    Sigmoid closed form: theta_phi = b1 - ln((1/phi - 1)/b1) / b2.
    """
    if not (0.0 < phi < 1.0):
        raise DomainError("phi must lie strictly inside (0, 1)")
    b1, b2 = params.env_b1, params.env_b2
    if params.plos_form == "sigmoid":
        theta = b1 - np.log((1.0 / phi - 1.0) / b1) / b2
    else:
        # literal form is invertible only where it is < 1
        theta = b1 + np.log(phi * b1) / b2
    if theta > 90.0:
        raise InfeasibleThresholdError(
            f"phi={phi} requires elevation {theta:.2f} deg > 90 deg")
    return float(max(theta, np.finfo(float).tiny))


def path_loss(uav: Position3, ue: Position3, params: ChannelParams) -> float:
    """Mixed LoS/NLoS path loss (linear) over the 3D distance."""
    delta = uav.as_array() - ue.as_array()
    d = float(np.linalg.norm(delta))
    if d == 0.0:
        raise GeometryError("coincident UAV and user positions")
    p_los = plos(elevation_angle(uav, ue), params)
    xi_los = 10.0 ** (params.atten_los_db / 10.0)
    xi_nlos = 10.0 ** (params.atten_nlos_db / 10.0)
    return float(params.k_o * d ** params.pathloss_exponent
                 * (p_los * xi_los + (1.0 - p_los) * xi_nlos))


def coverage_radius(h: float, phi: float, params: ChannelParams) -> float:
    """Largest UAV-user 3D distance keeping PLoS >= phi: h / sin(theta_phi)."""
    if h <= 0:
        raise GeometryError("altitude must be > 0")
    theta = np.radians(plos_inverse(phi, params))
    return float(h / np.sin(theta))


def pathloss_matrix(uav_xyz: np.ndarray, ue_xyz: np.ndarray, params: ChannelParams) -> np.ndarray:
    """Vectorized path loss, shape (N, L), for stacked position arrays."""
    uav_xyz = np.atleast_2d(np.asarray(uav_xyz, dtype=float))
    ue_xyz = np.atleast_2d(np.asarray(ue_xyz, dtype=float))
    diff = ue_xyz[:, None, :] - uav_xyz[None, :, :]          # (N, L, 3)
    d_h = np.hypot(diff[:, :, 0], diff[:, :, 1])
    dz = -diff[:, :, 2]                                      # UAV above user
    d = np.sqrt(d_h**2 + dz**2)
    if np.any(d == 0.0):
        raise GeometryError("coincident UAV and user positions")
    theta = np.degrees(np.arctan2(dz, d_h))                  # 90 when d_h = 0
    b1, b2 = params.env_b1, params.env_b2
    expo = np.exp(-b2 * (theta - b1))
    if params.plos_form == "sigmoid":
        p_los = 1.0 / (1.0 + b1 * expo)
    else:
        p_los = np.minimum(1.0, 1.0 / (b1 * expo))
    xi_los = 10.0 ** (params.atten_los_db / 10.0)
    xi_nlos = 10.0 ** (params.atten_nlos_db / 10.0)
    return params.k_o * d ** params.pathloss_exponent * (p_los * xi_los + (1.0 - p_los) * xi_nlos)


def link_gains(deployment, scenario, seed: int) -> LinkGains:
    """Gain tensor for every (user, sub-carrier, UAV) triple.

    With fading_mode="rayleigh", |h|^2 is i.i.d. unit-mean exponential drawn
    deterministically from `seed`; with "off" it is 1 everywhere.
    """
    params = scenario.channel
    ue = np.array([u.as_array() for u in scenario.users])
    uav = np.array([w.as_array() for w in deployment.positions])
    pl = pathloss_matrix(uav, ue, params)                    # (N, L)
    n, l = pl.shape
    k = scenario.K
    if params.fading_mode == "rayleigh":
        fading = rng_for(seed, "fading").exponential(1.0, size=(n, k, l))
        fading = np.maximum(fading, np.finfo(float).tiny)
    else:
        fading = np.ones((n, k, l))
    gain = fading / pl[:, None, :]
    return LinkGains(gain=gain, pathloss=pl, fading_mag_sq=fading)


def interference(p: np.ndarray, g: LinkGains, n: int, k: int, l: int) -> float:
    """Aggregated co-channel interference Phi[n,k,l] from non-serving UAVs."""
    p = np.asarray(p, dtype=float)
    other_l = [j for j in range(p.shape[2]) if j != l]
    total = 0.0
    for lp in other_l:
        power = p[:, k, lp].sum() - p[n, k, lp]
        total += power * g.gain[n, k, lp]
    return float(total)


def sinr(p: np.ndarray, g: LinkGains, params: ChannelParams, n: int, k: int, l: int) -> float:
    """SINR of user n on sub-carrier k served by UAV l."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ContractError("power tensor must be non-negative")
    phi = interference(p, g, n, k, l)
    return float(p[n, k, l] * g.gain[n, k, l] / (phi + params.noise_power_w))


def user_rate(p: np.ndarray, a: np.ndarray, g: LinkGains, params: ChannelParams,
              p_max_w: float, n: int, l: int) -> float:
    """Achievable rate (bit/s) of user n at UAV l: B * sum_k log2(1 + SINR)."""
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(p > a * p_max_w + 1e-12 * max(p_max_w, 1.0)):
        raise ContractError("power exceeds a[n,k,l] * P_max masking")
    total = 0.0
    for k in range(p.shape[1]):
        total += np.log2(1.0 + sinr(p, g, params, n, k, l))
    return float(params.bandwidth_hz * total)


def all_user_rates(p: np.ndarray, g: LinkGains, params: ChannelParams) -> np.ndarray:
    """Vectorized per-(n, l) rates (bit/s) under the no-self-interference rule."""
    p = np.asarray(p, dtype=float)
    n_users, n_k, n_l = p.shape
    cell_power = p.sum(axis=0)                               # (K, L)
    # interference on (n, k) if served by l: sum_{l' != l} g[n,k,l']*(cell_power[k,l'] - p[n,k,l'])
    recv = (cell_power[None, :, :] - p) * g.gain             # (N, K, L)
    recv_total = recv.sum(axis=2)                            # (N, K)
    phi = recv_total[:, :, None] - recv                      # exclude serving cell
    gamma = p * g.gain / (phi + params.noise_power_w)
    return params.bandwidth_hz * np.log2(1.0 + gamma).sum(axis=1)
