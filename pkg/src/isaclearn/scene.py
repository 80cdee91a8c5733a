"""Propagation scenes: user channels, point targets, array geometry.

A scene is one random draw of the environment around a dual-function base
station: K single-antenna downlink users with Rayleigh-faded pathloss
channels, and T point scatterers described by an angle, a range, and a
round-trip gain. The base station carries a half-wavelength uniform linear
array of M elements, broadside at 0 rad.

Geometry is 2-D: the array sits at the origin, user positions are drawn from
an axis-aligned rectangle, target positions from an angle sector and a range
interval. Pathloss models are log-distance with configurable (offset, slope)
in dB; one model for the two-way radar path, one for the one-way downlink.
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .linalg import RngStream, check_finite, sample_cgauss
from .units import dbm_to_watts


def steering_vector(theta: float, m: int) -> np.ndarray:
    """Array response of an M-element half-wavelength ULA toward angle theta.

    Element i responds exp(-j*pi*i*sin(theta)); theta in radians from
    broadside. Unit-modulus entries, so ||a||^2 = M.
    """
    if m < 1:
        raise InvalidArgumentError(f"array size must be >= 1, got {m}")
    idx = np.arange(m)
    return np.exp(-1j * np.pi * idx * math.sin(theta))


def pathloss_gain(dist_m, offset_db: float, slope_db: float):
    """Linear power gain 10^(-(offset + slope*log10(d))/10) at distance d meters."""
    d = np.asarray(dist_m, dtype=float)
    if np.any(d <= 0):
        raise InvalidArgumentError("pathloss distance must be positive")
    return 10.0 ** (-(offset_db + slope_db * np.log10(d)) / 10.0)


@dataclass(frozen=True)
class SceneConfig:
    """Scene sampling parameters. Defaults reproduce the evaluation setup."""

    m: int = 16                     # base-station antennas
    k: int = 4                      # downlink users
    t: int = 8                      # point targets
    user_x_range_m: tuple = (15.0, 18.0)
    user_y_range_m: tuple = (8.0, 18.0)
    target_angle_range_deg: tuple = (-80.0, -10.0)
    target_range_range_m: tuple = (5.0, 20.0)
    comm_pathloss_db: tuple = (30.0, 36.0)   # (offset, slope) one-way
    radar_pathloss_db: tuple = (30.0, 22.0)  # (offset, slope) round trip
    sigma2_dbm: float = -94.0       # downlink receiver noise power
    nu2_dbm: float = -70.0          # base-station receiver noise power
    rcs_mode: str = "unit"          # "unit" (|beta|=1, random phase) or "swerling1"

    def __post_init__(self):
        if self.m < 1 or self.k < 0 or self.t < 0:
            raise ConfigError(f"bad scene dims m={self.m} k={self.k} t={self.t}")
        for name in ("user_x_range_m", "user_y_range_m",
                     "target_angle_range_deg", "target_range_range_m"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ConfigError(f"{name} must be a finite (lo, hi) pair with lo <= hi")
        if self.target_range_range_m[0] <= 0:
            raise ConfigError("target ranges must be positive")
        if self.rcs_mode not in ("unit", "swerling1"):
            raise ConfigError(f"unknown rcs_mode {self.rcs_mode!r}")

    @property
    def sigma2_w(self) -> float:
        return float(dbm_to_watts(self.sigma2_dbm))

    @property
    def nu2_w(self) -> float:
        return float(dbm_to_watts(self.nu2_dbm))

    def to_dict(self) -> dict:
        d = asdict(self)
        for key, val in d.items():
            if isinstance(val, tuple):
                d[key] = list(val)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown scene config fields: {sorted(extra)}")
        kwargs = dict(d)
        for key, val in kwargs.items():
            if isinstance(val, list):
                kwargs[key] = tuple(val)
        return cls(**kwargs)


@dataclass(frozen=True)
class Target:
    """One point scatterer as seen from the array."""

    angle_rad: float
    range_m: float
    gain: complex          # two-way amplitude alpha (pathloss magnitude, random phase)
    rcs: complex           # radar cross-section coefficient beta
    channel: np.ndarray    # g = conj(alpha) * conj(a(theta)), length M


@dataclass
class Scene:
    """One draw of users and targets."""

    h_mat: np.ndarray              # K x M downlink channels, row k is h_k^T
    targets: tuple                 # Target instances, length T
    user_pos_m: np.ndarray         # K x 2 user coordinates

    @property
    def k(self) -> int:
        return self.h_mat.shape[0]

    @property
    def m(self) -> int:
        return self.h_mat.shape[1]

    @property
    def t(self) -> int:
        return len(self.targets)

    def target_channel_matrix(self) -> np.ndarray:
        """T x M matrix whose row i is g_i^T."""
        if not self.targets:
            return np.zeros((0, self.m), dtype=np.complex128)
        return np.stack([tg.channel for tg in self.targets])


def rcs_draw(rng: RngStream, mode: str = "unit") -> complex:
    """Draw one radar cross-section coefficient beta.

    "unit": |beta| = 1 with phase uniform on [0, 2pi).
    "swerling1": beta ~ CN(0, 1), so |beta|^2 is exponential with unit mean.
    """
    if mode == "unit":
        phase = rng.gen.uniform(0.0, 2.0 * math.pi)
        return complex(math.cos(phase), math.sin(phase))
    if mode == "swerling1":
        return complex(sample_cgauss(rng, 1, 1, 1.0)[0, 0])
    raise InvalidArgumentError(f"unknown rcs mode {mode!r}")


def sample_scene(cfg: SceneConfig, rng: RngStream) -> Scene:
    """Draw a scene: user positions and fading, then target geometry and gains.

    Draw order is fixed (users first, then per-target angle/range/phase/rcs),
    so a given (seed, stream) pair always yields the same scene.
    """
    g = rng.gen
    m, k, t = cfg.m, cfg.k, cfg.t

    xs = g.uniform(cfg.user_x_range_m[0], cfg.user_x_range_m[1], size=k)
    ys = g.uniform(cfg.user_y_range_m[0], cfg.user_y_range_m[1], size=k)
    pos = np.stack([xs, ys], axis=1)
    dist = np.hypot(xs, ys)
    gain = pathloss_gain(dist, *cfg.comm_pathloss_db)          # linear power
    fading = sample_cgauss(rng, k, m, 1.0)
    h_mat = np.sqrt(gain)[:, None] * fading                    # E||h_k||^2 = M*gain_k

    targets = []
    for _ in range(t):
        lo, hi = cfg.target_angle_range_deg
        theta = math.radians(g.uniform(lo, hi))
        rng_m = g.uniform(*cfg.target_range_range_m)
        amp = math.sqrt(pathloss_gain(rng_m, *cfg.radar_pathloss_db))
        phase = g.uniform(0.0, 2.0 * math.pi)
        alpha = amp * complex(math.cos(phase), math.sin(phase))
        beta = rcs_draw(rng, cfg.rcs_mode)
        chan = np.conj(alpha) * np.conj(steering_vector(theta, m))
        targets.append(Target(theta, rng_m, alpha, beta, chan))

    check_finite(h_mat, "scene channels")
    return Scene(h_mat=h_mat, targets=tuple(targets), user_pos_m=pos)
