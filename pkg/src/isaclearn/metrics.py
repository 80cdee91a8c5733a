"""Downlink transmission model and the two figures of merit.

The dual-function transmit matrix W = [C, S] is M x (M+K): one precoding
column per user plus M sensing-stream columns. Each symbol period the array
emits x = C d + S t for data d and sensing pseudo-noise t, both unit power,
so the transmit covariance is W W^H and the radiated power ||W||_F^2.

Communication quality is the per-user SINR

    gamma_k = |h_k^H c_k|^2 / (sum_{j != k} |h_k^H c_j|^2
                               + sum_m |h_k^H s_m|^2 + sigma^2),

sensing quality the illumination power a target channel extracts from the
covariance, Q_m = g_m^H W W^H g_m, reported as the worst case over targets.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ShapeError
from .linalg import RngStream, check_finite
from .scene import Scene
from .units import linear_to_db


@dataclass
class Precoder:
    """Transmit matrix with its power budget.

    w: M x (M+K) complex matrix [C, S]; columns 0..K-1 precode user data,
    columns K.. carry sensing streams. A fully formed precoder satisfies
    ||w||_F^2 = p_d_w; intermediate/edge values (e.g. the all-zero matrix)
    may be represented, so the constraint is checked by `power_ok`, not on
    construction.
    """

    w: np.ndarray
    p_d_w: float
    k: int

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.complex128)
        check_finite(self.w, "precoder")
        if self.w.ndim != 2:
            raise ShapeError("precoder matrix must be 2-D")
        m = self.w.shape[0]
        if self.w.shape[1] != m + self.k:
            raise ShapeError(
                f"precoder must be M x (M+K); got {self.w.shape} with k={self.k}")
        if self.p_d_w <= 0:
            raise InvalidArgumentError(f"power budget must be positive, got {self.p_d_w}")

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def comm(self) -> np.ndarray:
        return self.w[:, : self.k]

    @property
    def sens(self) -> np.ndarray:
        return self.w[:, self.k:]

    def power_ok(self, rtol: float = 1e-9) -> bool:
        p = float(np.sum(self.w.real ** 2 + self.w.imag ** 2))
        return abs(p - self.p_d_w) <= rtol * self.p_d_w


@dataclass
class DownlinkSymbols:
    """One symbol period of payloads: data d (length K) and sensing t (length M)."""

    data: np.ndarray
    sensing: np.ndarray


def sample_symbols(k: int, m: int, rng: RngStream) -> DownlinkSymbols:
    """Unit-power payloads: QPSK data symbols, Gaussian sensing streams."""
    g = rng.gen
    quad = g.integers(0, 4, size=k)
    data = np.exp(1j * (np.pi / 4 + np.pi / 2 * quad))
    t = (g.standard_normal(m) + 1j * g.standard_normal(m)) / np.sqrt(2.0)
    return DownlinkSymbols(data=data, sensing=t)


def downlink_tx(precoder: Precoder, symbols: DownlinkSymbols) -> np.ndarray:
    """Transmit vector x = C d + S t for one symbol period."""
    if symbols.data.shape[0] != precoder.k:
        raise ShapeError(f"got {symbols.data.shape[0]} data symbols for k={precoder.k}")
    if symbols.sensing.shape[0] != precoder.m:
        raise ShapeError(f"got {symbols.sensing.shape[0]} sensing symbols for m={precoder.m}")
    return precoder.comm @ symbols.data + precoder.sens @ symbols.sensing


def sinr(precoder: Precoder, h: np.ndarray, k: int, sigma2_w: float) -> float:
    """Downlink SINR of user k under channel h (length M), linear scale."""
    if not 0 <= k < precoder.k:
        raise InvalidArgumentError(f"user index {k} out of range for k={precoder.k}")
    if sigma2_w <= 0:
        raise InvalidArgumentError("noise power must be positive")
    if h.shape[0] != precoder.m:
        raise ShapeError(f"channel length {h.shape[0]} != antennas {precoder.m}")
    u = np.conj(h) @ precoder.w              # row of received amplitudes per stream
    p = u.real ** 2 + u.imag ** 2
    num = p[k]
    den = float(np.sum(p)) - num + sigma2_w
    return float(num / den)


def all_sinr(precoder: Precoder, scene: Scene, sigma2_w: float) -> np.ndarray:
    """Linear SINR of every user in the scene, shape (K,)."""
    if scene.k != precoder.k:
        raise ShapeError(f"scene has {scene.k} users, precoder expects {precoder.k}")
    u = np.conj(scene.h_mat) @ precoder.w    # K x (M+K)
    p = u.real ** 2 + u.imag ** 2
    num = np.diagonal(p[:, : precoder.k]).copy()
    den = p.sum(axis=1) - num + sigma2_w
    return num / den


def illumination(precoder: Precoder, g: np.ndarray) -> float:
    """Power the covariance W W^H radiates into target channel g: g^H W W^H g."""
    if g.shape[0] != precoder.m:
        raise ShapeError(f"target channel length {g.shape[0]} != antennas {precoder.m}")
    r = np.conj(g) @ precoder.w
    return float(np.sum(r.real ** 2 + r.imag ** 2))


def worst_case_illumination(precoder: Precoder, scene: Scene):
    """(min_m g_m^H W W^H g_m, argmin m) over the scene's targets.

    Ties resolve to the lowest index, matching the subgradient convention
    the training loss uses for the same minimum.
    """
    if not scene.targets:
        raise InvalidArgumentError("scene has no targets to illuminate")
    g_mat = scene.target_channel_matrix()
    r = np.conj(g_mat) @ precoder.w
    q = (r.real ** 2 + r.imag ** 2).sum(axis=1)
    idx = int(np.argmin(q))
    return float(q[idx]), idx


def constraint_slack(precoder: Precoder, scene: Scene, gamma_db: float,
                     sigma2_w: float) -> np.ndarray:
    """Per-user slack h_k = gamma_k - 10^(gamma_db/10); >= 0 means satisfied."""
    target = 10.0 ** (gamma_db / 10.0)
    return all_sinr(precoder, scene, sigma2_w) - target


def per_user_mean_sinr(entries, sigma2_w: float) -> np.ndarray:
    """Mean linear SINR per user over (precoder, scene) realizations."""
    if len(entries) == 0:
        raise InvalidArgumentError("empty evaluation set")
    acc = None
    for prec, scene in entries:
        s = all_sinr(prec, scene, sigma2_w)
        if acc is None:
            acc = np.zeros_like(s)
        elif acc.shape != s.shape:
            raise ShapeError("evaluation set mixes different user counts")
        acc += s
    return acc / len(entries)


def worst_avg_sinr(entries, sigma2_w: float) -> float:
    """min over users of the realization-averaged SINR, in dB."""
    mean = per_user_mean_sinr(entries, sigma2_w)
    return float(linear_to_db(np.min(mean)))
