"""Unsupervised training of the precoder network.

The per-sample objective rewards worst-case target illumination and punishes
SINR shortfall through learnable per-user multipliers:

    l = lambda_S * min_m Q_m(W)
        + lambda_C * sum_k |mu_k + eps| * max(-h_k, 0) * h_k^kappa,

where h_k = gamma_k(W) - 10^(Gamma_dB/10) is the constraint slack and
W = f(Ytil, Ztil) the network output on the power sphere. Training minimizes
-l over network weights and multipliers jointly with Adam on a training set
of sounding/scene pairs drawn once up front and revisited every epoch; the
network never sees ground truth, only its own transmit matrix evaluated
against the sampled channels.

Multiplier updates support two modes: "descent" treats mu exactly like any
other parameter of -l (mu shrinks while a user is violated, which tempers
the penalty), while "dual-ascent" flips the sign of the mu gradient so
multipliers grow on violated constraints like classical dual updates.
"""

import math
from dataclasses import dataclass, asdict, field

import numpy as np

from . import autodiff as ad
from .autodiff import GradBundle, Tape
from .errors import ConfigError, DivergenceError, InvalidArgumentError
from .linalg import RngStream
from .network import NetParams, init_params, net_forward
from .scene import Scene, SceneConfig, sample_scene
from .sounding import SoundingConfig, SoundingData, sound_scene

_MU_MODES = ("descent", "dual-ascent")


@dataclass(frozen=True)
class Hyperparams:
    """Objective and optimizer settings. Defaults reproduce the trained setup."""

    lambda_s: float = 1e7       # illumination weight
    lambda_c: float = 1.0       # constraint-penalty weight
    kappa: int = 3              # penalty exponent (odd, >= 1)
    eps_mu: float = 1e-3        # multiplier offset inside |mu + eps|
    gamma_db: float = 5.0       # per-user SINR target
    learning_rate: float = 1e-4
    epochs: int = 2000
    batches_per_epoch: int = 10
    batch_size: int = 10
    pd_dbw: float = 0.0         # downlink power budget during training
    mu_mode: str = "descent"

    def __post_init__(self):
        if self.lambda_s <= 0 or self.lambda_c <= 0:
            raise ConfigError("objective weights must be positive")
        if self.kappa < 1 or self.kappa % 2 != 1:
            raise ConfigError(f"kappa must be an odd integer >= 1, got {self.kappa}")
        if self.eps_mu <= 0:
            raise ConfigError("eps_mu must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 0 or self.batches_per_epoch < 1 or self.batch_size < 1:
            raise ConfigError("bad epoch/batch settings")
        if self.mu_mode not in _MU_MODES:
            raise ConfigError(f"mu_mode must be one of {_MU_MODES}, got {self.mu_mode!r}")

    @property
    def pd_w(self) -> float:
        return 10.0 ** (self.pd_dbw / 10.0)

    @property
    def gamma_lin(self) -> float:
        return 10.0 ** (self.gamma_db / 10.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown hyperparameter fields: {sorted(extra)}")
        return cls(**d)


def mu_update_mode(hp: Hyperparams) -> str:
    """How multipliers move: "descent" (objective gradient) or "dual-ascent"."""
    return hp.mu_mode


def constraint_penalty(mu, slack, kappa: int, eps_mu: float):
    """Per-user penalty |mu + eps| * max(-h, 0) * h^kappa. Traceable.

    Zero wherever h >= 0 (the max takes its zero branch at h = 0), negative
    on violations since kappa is odd.
    """
    gate = ad.relu(ad.neg(slack))
    return ad.mul(ad.mul(ad.absval(ad.add(mu, eps_mu)), gate), ad.powi(slack, kappa))


def loss_parts(params, data: SoundingData, scene: Scene, hp: Hyperparams,
               sigma2_w: float):
    """Objective pieces for one sample. Traceable.

    Returns a dict with "loss" (l), "q" (min_m Q_m), "penalty" (the summed
    penalty term), and "slack" (per-user h vector). Values are Vars when
    params carry Vars, plain arrays otherwise.
    """
    m, k = scene.m, scene.k
    wr, wi = net_forward(params, data.pilots, data.echoes, hp.pd_w, norm_guard=1e-12)

    # received amplitude rows: conj(H) @ W and conj(G) @ W
    hc = np.conj(scene.h_mat)
    ur, ui = ad.cpair_matmul((hc.real, hc.imag), (wr, wi))
    p = ad.add(ad.mul(ur, ur), ad.mul(ui, ui))        # K x (M+K) stream powers

    ones = np.ones(m + k)
    mask = np.zeros((k, m + k))
    mask[np.arange(k), np.arange(k)] = 1.0
    wanted = ad.matmul(ad.mul(p, mask), ones)          # |h_k^H c_k|^2
    rowsum = ad.matmul(p, ones)
    den = ad.add(ad.sub(rowsum, wanted), sigma2_w)
    slack = ad.sub(ad.div(wanted, den), hp.gamma_lin)  # h_k = gamma_k - target

    penalty = ad.total(constraint_penalty(params.mu, slack, hp.kappa, hp.eps_mu))

    gc = np.conj(scene.target_channel_matrix())
    vr, vi = ad.cpair_matmul((gc.real, gc.imag), (wr, wi))
    qvec = ad.matmul(ad.add(ad.mul(vr, vr), ad.mul(vi, vi)), ones)
    q = ad.vmin(qvec)

    loss = ad.add(ad.mul(hp.lambda_s, q), ad.mul(hp.lambda_c, penalty))
    return {"loss": loss, "q": q, "penalty": penalty, "slack": slack}


def loss(params: NetParams, sample, hp: Hyperparams, sigma2_w: float) -> float:
    """Objective l for one (SoundingData, Scene) sample, as a float."""
    data, scene = sample
    return float(loss_parts(params, data, scene, hp, sigma2_w)["loss"])


def loss_with_grad(params: NetParams, sample, hp: Hyperparams, sigma2_w: float):
    """One traced evaluation: (l, summary floats, dl/dparams bundle)."""
    data, scene = sample
    tape = Tape()
    leaves = [tape.leaf(a) for a in params.arrays()]
    parts = loss_parts(params.replace_arrays(leaves), data, scene, hp, sigma2_w)
    tape.backward(parts["loss"])
    grads = [lv.grad if lv.grad is not None else np.zeros_like(lv.value) for lv in leaves]
    summary = {
        "q": float(parts["q"].value),
        "penalty": float(parts["penalty"].value),
        "min_slack": float(np.min(parts["slack"].value)),
    }
    return float(parts["loss"].value), summary, GradBundle(grads)


def adam_update(arrays, grads, m_acc, v_acc, t: int, lr: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam step, in place; t counts from 1."""
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for a, g, m1, v1 in zip(arrays, grads, m_acc, v_acc):
        m1 *= beta1
        m1 += (1.0 - beta1) * g
        v1 *= beta2
        v1 += (1.0 - beta2) * (g * g)
        a -= lr * (m1 / bc1) / (np.sqrt(v1 / bc2) + eps)


@dataclass
class TrainState:
    """Mutable optimizer state; one owner, updated in place."""

    params: NetParams
    m_acc: list
    v_acc: list
    step: int = 0

    @classmethod
    def fresh(cls, params: NetParams) -> "TrainState":
        return cls(params=params,
                   m_acc=[np.zeros_like(a) for a in params.arrays()],
                   v_acc=[np.zeros_like(a) for a in params.arrays()],
                   step=0)


def adam_step(state: TrainState, grad: GradBundle, lr: float) -> TrainState:
    """Apply one Adam step of the given gradient to the state's parameters."""
    state.step += 1
    adam_update(state.params.arrays(), grad.arrays, state.m_acc, state.v_acc,
                state.step, lr)
    return state


@dataclass
class HistoryRow:
    """One batch of training, as logged to the loss-history CSV."""

    epoch: int
    batch: int
    objective: float      # -l, the quantity being minimized
    q_term: float         # lambda_S * min_m Q_m, batch mean
    penalty_term: float   # lambda_C * penalty, batch mean
    min_slack: float      # worst h_k across the batch
    grad_norm: float


def train(scene_cfg: SceneConfig, snd_cfg: SoundingConfig, hp: Hyperparams,
          lift_dim: int, seed: int, progress=None):
    """Train a fresh network; returns (NetParams, list of HistoryRow).

    The training set holds batches_per_epoch * batch_size sounding/scene
    pairs, drawn once up front and revisited in the same batch order every
    epoch. Deterministic in (configs, hp, lift_dim, seed): parameter init
    uses stream 0 of the seed, the i-th training sample uses stream i+1,
    and batch gradients average per-sample gradients in draw order.
    """
    if scene_cfg.k < 1 or scene_cfg.t < 1:
        raise ConfigError("training needs at least one user and one target")
    params = init_params(scene_cfg.m, scene_cfg.k, lift_dim, RngStream(seed, 0))
    state = TrainState.fresh(params)
    sigma2_w = scene_cfg.sigma2_w
    nu2_w = scene_cfg.nu2_w
    flip_mu = mu_update_mode(hp) == "dual-ascent"

    dataset = []
    for i in range(hp.batches_per_epoch * hp.batch_size):
        stream = RngStream(seed, 1 + i)
        scene = sample_scene(scene_cfg, stream)
        data = sound_scene(scene, snd_cfg, stream, nu2_w)
        dataset.append((data, scene))

    history = []
    for epoch in range(hp.epochs):
        for batch in range(hp.batches_per_epoch):
            acc = None
            loss_sum = 0.0
            q_sum = 0.0
            pen_sum = 0.0
            min_slack = math.inf
            lo = batch * hp.batch_size
            for sample in dataset[lo:lo + hp.batch_size]:
                lval, summary, grad = loss_with_grad(state.params, sample,
                                                     hp, sigma2_w)
                loss_sum += lval
                q_sum += hp.lambda_s * summary["q"]
                pen_sum += hp.lambda_c * summary["penalty"]
                min_slack = min(min_slack, summary["min_slack"])
                if acc is None:
                    acc = grad
                else:
                    acc.add_(grad)
            acc.scale_(-1.0 / hp.batch_size)       # gradient of -l, batch mean
            if flip_mu:
                acc.arrays[-1] *= -1.0

            objective = -loss_sum / hp.batch_size
            if not math.isfinite(objective):
                raise DivergenceError(
                    f"non-finite training objective at epoch {epoch} batch {batch}")
            adam_step(state, acc, hp.learning_rate)
            row = HistoryRow(epoch=epoch, batch=batch, objective=objective,
                             q_term=q_sum / hp.batch_size,
                             penalty_term=pen_sum / hp.batch_size,
                             min_slack=min_slack, grad_norm=acc.norm())
            history.append(row)
            if progress is not None:
                progress(row)

    for a in state.params.arrays():
        if not np.all(np.isfinite(a)):
            raise DivergenceError("training produced non-finite parameters")
    return state.params, history
