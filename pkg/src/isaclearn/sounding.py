"""Uplink pilot sounding and radar echo probing.

Before precoding, the base station observes the environment twice:

* Users transmit known orthogonal pilots; the array receives
  Y = sqrt(P_u) H^T F + N and correlates against the pilots,
  Ytil = Y F^H = sqrt(P_u) L_p H^T + N F^H. With DFT-row pilots
  F F^H = L_p I, so the compression is lossless in the noiseless limit.

* The array transmits a wide probing sequence E with E E^H = (L_r / M) I and
  receives the superimposed echoes Z = sqrt(P_r) sum_m beta_m g_m* g_m^H E + V,
  then matched-filters, Ztil = Z E^H.

The pair (Ytil, Ztil) is the only environment information handed to the
learned precoder. Powers are linear watts here; converting from dBW/dBm is
the caller's job.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError, InvalidArgumentError, ShapeError
from .linalg import RngStream, check_finite, sample_cgauss
from .scene import Scene
from .units import dbw_to_watts


@dataclass(frozen=True)
class SoundingConfig:
    """Pilot/probing lengths and transmit powers (dBW)."""

    lp: int = 20          # uplink pilot length
    lr: int = 32          # radar probing length
    pu_dbw: float = 0.0   # per-user uplink pilot power
    pr_dbw: float = 10.0  # radar probing power

    def __post_init__(self):
        if self.lp < 1 or self.lr < 1:
            raise ConfigError(f"pilot/probing lengths must be >= 1, got lp={self.lp} lr={self.lr}")

    @property
    def pu_w(self) -> float:
        return float(dbw_to_watts(self.pu_dbw))

    @property
    def pr_w(self) -> float:
        return float(dbw_to_watts(self.pr_dbw))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SoundingConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown sounding config fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class SoundingData:
    """Compressed sounding observations fed to the precoder.

    pilots: M x K pilot-compressed uplink snapshot Ytil.
    echoes: M x M matched-filtered echo snapshot Ztil.
    """

    pilots: np.ndarray
    echoes: np.ndarray

    def __post_init__(self):
        check_finite(self.pilots, "compressed pilots")
        check_finite(self.echoes, "filtered echoes")
        if self.pilots.ndim != 2 or self.echoes.ndim != 2:
            raise ShapeError("sounding data must be 2-D matrices")
        if self.echoes.shape[0] != self.echoes.shape[1]:
            raise ShapeError(f"echo snapshot must be square, got {self.echoes.shape}")
        if self.pilots.shape[0] != self.echoes.shape[0]:
            raise ShapeError("pilot and echo snapshots disagree on array size")


def gen_pilots(k: int, lp: int) -> np.ndarray:
    """K orthogonal unit-modulus pilot sequences of length L_p (DFT rows).

    F[u, l] = exp(-2j*pi*u*l / L_p), so F F^H = L_p I_K for K <= L_p.
    """
    if k < 1:
        raise InvalidArgumentError(f"need at least one user, got k={k}")
    if lp < k:
        raise InvalidArgumentError(f"pilot length {lp} cannot orthogonalize {k} users")
    u = np.arange(k)[:, None]
    l = np.arange(lp)[None, :]
    return np.exp(-2j * np.pi * u * l / lp)


def rx_pilots(scene: Scene, pilots: np.ndarray, pu_w: float, nu2_w: float,
              rng: RngStream, noiseless: bool = False) -> np.ndarray:
    """Received uplink pilot block Y = sqrt(P_u) H^T F + N, shape M x L_p."""
    if pu_w <= 0 or nu2_w <= 0:
        raise InvalidArgumentError("powers must be positive (watts)")
    k, lp = pilots.shape
    if k != scene.k:
        raise ShapeError(f"pilot rows {k} != scene users {scene.k}")
    y = math.sqrt(pu_w) * (scene.h_mat.T @ pilots)
    if not noiseless:
        y = y + sample_cgauss(rng, scene.m, lp, nu2_w)
    return y


def pilot_compress(y: np.ndarray, pilots: np.ndarray) -> np.ndarray:
    """Correlate the pilot block against the pilots: Ytil = Y F^H, shape M x K."""
    if y.shape[1] != pilots.shape[1]:
        raise ShapeError(f"pilot block length {y.shape[1]} != pilot length {pilots.shape[1]}")
    return y @ pilots.conj().T


def gen_probing(m: int, lr: int) -> np.ndarray:
    """M probing sequences of length L_r with E E^H = (L_r / M) I_M.

    Scaled DFT rows: E[i, l] = exp(-2j*pi*i*l / L_r) / sqrt(M). The scaling
    spreads unit average power over the array, and the steering response
    satisfies a(theta)^H E E^H a(theta) = L_r for every angle.
    """
    if m < 1:
        raise InvalidArgumentError(f"array size must be >= 1, got {m}")
    if lr < m:
        raise InvalidArgumentError(f"probing length {lr} cannot excite {m} antennas orthogonally")
    i = np.arange(m)[:, None]
    l = np.arange(lr)[None, :]
    return np.exp(-2j * np.pi * i * l / lr) / math.sqrt(m)


def rx_echoes(scene: Scene, probing: np.ndarray, pr_w: float, nu2_w: float,
              rng: RngStream, noiseless: bool = False) -> np.ndarray:
    """Received echo block Z = sqrt(P_r) sum_m beta_m g_m* g_m^H E + V, shape M x L_r."""
    if pr_w <= 0 or nu2_w <= 0:
        raise InvalidArgumentError("powers must be positive (watts)")
    m, lr = probing.shape
    if m != scene.m:
        raise ShapeError(f"probing rows {m} != scene antennas {scene.m}")
    z = np.zeros((m, lr), dtype=np.complex128)
    for tg in scene.targets:
        g = tg.channel
        z += tg.rcs * np.outer(np.conj(g), np.conj(g)) @ probing
    z *= math.sqrt(pr_w)
    if not noiseless:
        z = z + sample_cgauss(rng, m, lr, nu2_w)
    return z


def matched_filter(z: np.ndarray, probing: np.ndarray) -> np.ndarray:
    """Correlate echoes against the probing: Ztil = Z E^H, shape M x M.

    Noiseless single target: Ztil = sqrt(P_r) (L_r / M) beta g* g^H.
    """
    if z.shape[1] != probing.shape[1]:
        raise ShapeError(f"echo block length {z.shape[1]} != probing length {probing.shape[1]}")
    return z @ probing.conj().T


def sound_scene(scene: Scene, cfg: SoundingConfig, rng: RngStream,
                nu2_w: float, noiseless: bool = False) -> SoundingData:
    """Run the full sounding pipeline for one scene.

    Draw order is pilots-then-echoes, so a given stream replays identically.
    """
    pilots = gen_pilots(scene.k, cfg.lp)
    probing = gen_probing(scene.m, cfg.lr)
    y = rx_pilots(scene, pilots, cfg.pu_w, nu2_w, rng, noiseless=noiseless)
    z = rx_echoes(scene, probing, cfg.pr_w, nu2_w, rng, noiseless=noiseless)
    return SoundingData(pilots=pilot_compress(y, pilots), echoes=matched_filter(z, probing))
