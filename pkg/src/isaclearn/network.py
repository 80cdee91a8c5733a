"""The learned precoder: architecture, forward pass, checkpoints.

Three column-shared MLPs map sounding observations to a transmit matrix:

* a pilot branch lifts each real-stacked pilot column (2M) to dimension d,
* an echo branch does the same for each of the M echo columns,
* a fusion stack maps every lifted column (pilot columns first, then echo
  columns) through d -> d -> d -> 2d -> 2M, producing one real-stacked
  precoder column each.

Because weights are shared across columns, the same parameters serve any
number of users; the user count only changes how many pilot columns flow
through. The real output stack is merged to complex and scaled onto the
power sphere ||W||_F^2 = P_d.

The per-user constraint multipliers mu live alongside the MLP weights so
one optimizer updates both; they are not part of the architecture and are
excluded from param_count.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DegenerateOutputError, InvalidArgumentError, ShapeError
from .linalg import RngStream, c2r_stack, check_finite
from .metrics import Precoder
from .sounding import SoundingData

_ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    """One affine layer: weight (out, in), bias (out,), activation name."""

    weight: object
    bias: object
    activation: str

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise InvalidArgumentError(
                f"unsupported activation {self.activation!r}; expected one of {_ACTIVATIONS}")
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("layer expects a 2-D weight and 1-D bias")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != weight rows {self.weight.shape[0]}")


@dataclass
class MlpParams:
    """A chain of layers with matching inner dimensions."""

    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("an MLP needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ShapeError(
                    f"layer chain broken: {prev.weight.shape} feeds {nxt.weight.shape}")

    @property
    def in_size(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_size(self) -> int:
        return self.layers[-1].weight.shape[0]


@dataclass
class NetParams:
    """Full trainable state: three MLPs plus the constraint multipliers."""

    comm: MlpParams
    sens: MlpParams
    isac: MlpParams
    mu: object
    m: int
    lift_dim: int

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    def arrays(self) -> list:
        """All parameter arrays in a fixed order; mu last."""
        out = []
        for mlp in (self.comm, self.sens, self.isac):
            for layer in mlp.layers:
                out.append(layer.weight)
                out.append(layer.bias)
        out.append(self.mu)
        return out

    def replace_arrays(self, arrays: list) -> "NetParams":
        """Rebuild the same structure around new arrays (ndarrays or Vars)."""
        arrays = list(arrays)
        if len(arrays) != len(self.arrays()):
            raise ShapeError(f"expected {len(self.arrays())} arrays, got {len(arrays)}")
        it = iter(arrays)
        mlps = []
        for mlp in (self.comm, self.sens, self.isac):
            mlps.append(MlpParams([
                Layer(next(it), next(it), layer.activation) for layer in mlp.layers]))
        return NetParams(comm=mlps[0], sens=mlps[1], isac=mlps[2],
                         mu=next(it), m=self.m, lift_dim=self.lift_dim)


def init_params(m: int, k: int, d: int, rng: RngStream) -> NetParams:
    """Fresh parameters: uniform(+-sqrt(1/fan_in)) weights, zero biases, mu = 1.

    Branch widths follow the lift dimension d: pilot/echo branches are
    2M -> 2d -> d, the fusion stack d -> d -> d -> 2d -> 2M with an
    identity output layer; everything else is ReLU.
    """
    if m < 1 or k < 1 or d < 1:
        raise InvalidArgumentError(f"bad network dims m={m} k={k} d={d}")
    gen = rng.gen

    def layer(out_sz, in_sz, act):
        bound = math.sqrt(1.0 / in_sz)
        w = gen.uniform(-bound, bound, size=(out_sz, in_sz))
        return Layer(w, np.zeros(out_sz), act)

    branch_dims = [(2 * d, 2 * m, "relu"), (d, 2 * d, "relu")]
    comm = MlpParams([layer(*spec) for spec in branch_dims])
    sens = MlpParams([layer(*spec) for spec in branch_dims])
    isac = MlpParams([
        layer(d, d, "relu"),
        layer(d, d, "relu"),
        layer(2 * d, d, "relu"),
        layer(2 * m, 2 * d, "identity"),
    ])
    return NetParams(comm=comm, sens=sens, isac=isac, mu=np.ones(k), m=m, lift_dim=d)


def mlp_apply(p: MlpParams, x):
    """Apply the MLP to every column of x (shape in_size x n). Traceable."""
    out = x
    for layer in p.layers:
        out = ad.matmul(layer.weight, out) + ad.reshape(layer.bias, (-1, 1))
        if layer.activation == "relu":
            out = ad.relu(out)
    return out


def mlp_forward(p: MlpParams, x: np.ndarray) -> np.ndarray:
    """Plain single-vector forward pass (length in_size -> length out_size)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != p.in_size:
        raise ShapeError(f"expected a length-{p.in_size} vector, got shape {x.shape}")
    return mlp_apply(p, x[:, None])[:, 0]


def net_raw(params: NetParams, ytil, ztil):
    """Unnormalized real-stacked output W~ (2M x (K+M)). Traceable.

    ytil/ztil are the complex sounding snapshots (constants under tracing).
    """
    m = params.m
    if ytil.shape[0] != m or ztil.shape != (m, m):
        raise ShapeError(
            f"sounding shapes {ytil.shape}/{ztil.shape} do not match m={m}")
    if ytil.shape[1] < 1:
        raise ShapeError("need at least one pilot column")
    lifted = ad.hstack([
        mlp_apply(params.comm, c2r_stack(ytil)),
        mlp_apply(params.sens, c2r_stack(ztil)),
    ])
    return mlp_apply(params.isac, lifted)


def net_forward(params: NetParams, ytil, ztil, pd_w: float, norm_guard: float = 0.0):
    """Forward pass to the power sphere; returns (w_real, w_imag). Traceable.

    norm_guard > 0 keeps the training trace finite if the raw output ever
    collapses to zero; inference uses precode(), which raises instead.
    """
    m = params.m
    wtil = net_raw(params, ytil, ztil)
    wr = ad.rows(wtil, 0, m)
    wi = ad.rows(wtil, m, 2 * m)
    n2 = ad.total(ad.mul(wr, wr)) + ad.total(ad.mul(wi, wi))
    scale = ad.div(math.sqrt(pd_w), ad.sqrtv(n2) + norm_guard)
    return ad.mul(wr, scale), ad.mul(wi, scale)


def precode(params: NetParams, data: SoundingData, pd_w: float) -> Precoder:
    """Map one sounding snapshot to a transmit matrix on the power sphere.

    The normalizer sums per-column energies with exact (fsum) accumulation,
    so reordering pilot columns permutes precoder columns bit-for-bit.
    """
    if pd_w <= 0:
        raise InvalidArgumentError(f"power budget must be positive, got {pd_w}")
    k = data.pilots.shape[1]
    wtil = net_raw(params, data.pilots, data.echoes)
    m = params.m
    wr, wi = wtil[:m], wtil[m:]
    col_energy = (wr * wr + wi * wi).sum(axis=0)
    n2 = math.fsum(col_energy.tolist())
    if n2 == 0.0:
        raise DegenerateOutputError("network produced an all-zero precoder")
    scale = math.sqrt(pd_w / n2)
    return Precoder(w=scale * (wr + 1j * wi), p_d_w=pd_w, k=k)


def param_count(params: NetParams) -> int:
    """Trainable scalars in the shared architecture (multipliers excluded)."""
    n = 0
    for mlp in (params.comm, params.sens, params.isac):
        for layer in mlp.layers:
            n += layer.weight.size + layer.bias.size
    return n


_MAGIC = b"PCDNET01"
_VERSION = 1


def save_checkpoint(path, params: NetParams, meta: dict = None) -> None:
    """Write parameters + metadata: JSON header, then little-endian f8 blobs.

    Blobs follow the arrays() order (mu last), so files are byte-identical
    for identical parameters and metadata.
    """
    arrays = params.arrays()
    header = {
        "m": params.m,
        "k": params.k,
        "lift_dim": params.lift_dim,
        "activations": [
            [layer.activation for layer in mlp.layers]
            for mlp in (params.comm, params.sens, params.isac)
        ],
        "shapes": [list(a.shape) for a in arrays],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(_VERSION).tobytes())
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (NetParams, meta dict)."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ConfigError(f"{path} is not a precoder checkpoint")
        version = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        if version != _VERSION:
            raise ConfigError(f"unsupported checkpoint version {version}")
        hlen = int(np.frombuffer(fh.read(8), dtype=np.uint64)[0])
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()

    shapes = [tuple(s) for s in header["shapes"]]
    need = sum(int(np.prod(s)) for s in shapes) * 8
    if len(payload) != need:
        raise ConfigError(f"checkpoint payload is {len(payload)} bytes, expected {need}")
    arrays = []
    off = 0
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(np.frombuffer(payload, dtype="<f8", count=n, offset=off)
                      .astype(np.float64).reshape(s))
        off += n * 8

    acts = header["activations"]
    it = iter(arrays[:-1])
    mlps = []
    for mlp_acts in acts:
        mlps.append(MlpParams([Layer(next(it), next(it), act) for act in mlp_acts]))
    params = NetParams(comm=mlps[0], sens=mlps[1], isac=mlps[2], mu=arrays[-1],
                       m=int(header["m"]), lift_dim=int(header["lift_dim"]))
    for a in params.arrays():
        check_finite(a, "checkpoint array")
    return params, header.get("meta", {})
