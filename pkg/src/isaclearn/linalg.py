"""Complex matrix helpers and reproducible random streams.

Complex matrices are plain complex128 ndarrays. The helpers here cover the
operations the rest of the package leans on: circularly-symmetric Gaussian
sampling, the real stacking used to feed complex data into real-valued
networks, and Frobenius norms.

Random numbers come from RngStream, a thin wrapper over numpy's counter-based
Philox generator. A stream is identified by (seed, stream_id); two streams
with different ids are statistically independent, and reconstructing a stream
from the same pair replays the identical sequence. Streams are single-owner:
share the (seed, id) pair across threads, not the object.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, ShapeError


@dataclass
class RngStream:
    """A named, replayable random stream.

    Draws advance internal state, so the n-th draw from a stream is a pure
    function of (seed, stream_id, n). Used for deterministic scene/noise
    generation across training, evaluation, and tests.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(default=None, repr=False, compare=False)

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen


def check_finite(x: np.ndarray, name: str = "array") -> np.ndarray:
    """Reject NaN/Inf on construction paths."""
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return x


def sample_cgauss(rng: RngStream, rows: int, cols: int, variance: float) -> np.ndarray:
    """Sample a rows x cols matrix of iid CN(0, variance) entries.

    Circular symmetry: real and imaginary parts are independent
    N(0, variance/2), so E|entry|^2 = variance.
    """
    if variance <= 0.0 or not math.isfinite(variance):
        raise InvalidArgumentError(f"variance must be positive and finite, got {variance}")
    if rows < 0 or cols < 0:
        raise InvalidArgumentError(f"matrix dims must be non-negative, got {rows}x{cols}")
    scale = math.sqrt(variance / 2.0)
    g = rng.gen
    return scale * (g.standard_normal((rows, cols)) + 1j * g.standard_normal((rows, cols)))


def c2r_stack(x: np.ndarray) -> np.ndarray:
    """Stack a complex M x N matrix into a real 2M x N matrix, [Re; Im].

    Pure restacking, no arithmetic; exact inverse of r2c_merge.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"c2r_stack expects a 2-D matrix, got ndim={x.ndim}")
    xc = x.astype(np.complex128, copy=False)
    return np.vstack([xc.real, xc.imag])


def r2c_merge(x: np.ndarray) -> np.ndarray:
    """Merge a real 2M x N matrix back into a complex M x N matrix.

    Rows 0..M-1 become real parts, rows M..2M-1 imaginary parts.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"r2c_merge expects a 2-D matrix, got ndim={x.ndim}")
    if x.shape[0] % 2 != 0:
        raise ShapeError(f"r2c_merge needs an even row count, got {x.shape[0]}")
    m = x.shape[0] // 2
    return x[:m] + 1j * x[m:]


def frob_norm(x: np.ndarray) -> float:
    """Frobenius norm; for complex input equals the norm of the real restack."""
    return float(np.linalg.norm(x))
