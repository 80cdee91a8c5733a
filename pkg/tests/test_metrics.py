import math

import numpy as np
import pytest

from isaclearn.errors import InvalidArgumentError, ShapeError
from isaclearn.linalg import RngStream, sample_cgauss
from isaclearn.metrics import (DownlinkSymbols, Precoder, all_sinr,
                               constraint_slack, downlink_tx, illumination,
                               per_user_mean_sinr, sample_symbols, sinr,
                               worst_avg_sinr, worst_case_illumination)
from isaclearn.scene import Scene, Target, sample_scene, steering_vector

from conftest import small_scene_cfg


def _rand_precoder(m, k, pd, stream):
    w = sample_cgauss(RngStream(99, stream), m, m + k, 1.0)
    w *= math.sqrt(pd / np.sum(np.abs(w) ** 2))
    return Precoder(w=w, p_d_w=pd, k=k)


def _scene_with(h_mat, targets):
    k = h_mat.shape[0]
    return Scene(h_mat=h_mat, targets=tuple(targets),
                 user_pos_m=np.zeros((k, 2)))


def _target(theta, m, gain=1.0, rcs=1.0):
    a = steering_vector(theta, m)
    return Target(angle_rad=theta, range_m=10.0, gain=gain, rcs=rcs,
                  channel=np.conj(gain) * np.conj(a))


def test_sinr_interference_free():
    # single user, single comm column aligned with the channel, no sensing
    # power: SINR = P ||h||^2 / sigma^2
    m, pd, sig = 4, 2.0, 0.5
    h = np.array([1.0 + 0j, 1j, -1.0, 0.5])
    w = np.zeros((m, m + 1), dtype=complex)
    w[:, 0] = h / np.linalg.norm(h) * math.sqrt(pd)
    prec = Precoder(w=w, p_d_w=pd, k=1)
    expect = pd * np.sum(np.abs(h) ** 2) / sig
    assert sinr(prec, h, 0, sig) == pytest.approx(expect, rel=1e-12)


def test_sinr_counts_all_other_streams():
    # orthogonal columns: each stream's power lands fully on one of two users
    h1 = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
    h2 = np.array([0.0, 1.0, 0.0, 0.0], dtype=complex)
    w = np.zeros((4, 6), dtype=complex)
    w[0, 0] = math.sqrt(0.5)   # user 1 signal
    w[1, 1] = math.sqrt(0.3)   # user 2 signal
    w[0, 2] = math.sqrt(0.2)   # sensing stream hitting user 1
    prec = Precoder(w=w, p_d_w=1.0, k=2)
    sig = 0.1
    assert sinr(prec, h1, 0, sig) == pytest.approx(0.5 / (0.2 + sig), rel=1e-12)
    assert sinr(prec, h2, 1, sig) == pytest.approx(0.3 / sig, rel=1e-12)


def test_all_sinr_matches_scalar():
    cfg = small_scene_cfg()
    scene = sample_scene(cfg, RngStream(1, 0))
    prec = _rand_precoder(cfg.m, cfg.k, 1.0, 0)
    vec = all_sinr(prec, scene, cfg.sigma2_w)
    for k in range(cfg.k):
        assert vec[k] == pytest.approx(sinr(prec, scene.h_mat[k], k, cfg.sigma2_w),
                                       rel=1e-12)


def test_sinr_monte_carlo():
    # closed form against a symbol-level Monte-Carlo estimate
    cfg = small_scene_cfg()
    scene = sample_scene(cfg, RngStream(2, 0))
    prec = _rand_precoder(cfg.m, cfg.k, 1.0, 1)
    sig = cfg.sigma2_w
    n = 200_000
    rng = RngStream(2, 5)
    gen = rng.gen
    h = scene.h_mat[0]
    quad = gen.integers(0, 4, size=(n, cfg.k))
    data = np.exp(1j * (np.pi / 4 + np.pi / 2 * quad))
    sens = (gen.standard_normal((n, cfg.m)) + 1j * gen.standard_normal((n, cfg.m))) / np.sqrt(2)
    rx_sig = data[:, 0] * (np.conj(h) @ prec.w[:, 0])
    rx_int = data[:, 1:] @ (np.conj(h) @ prec.w[:, 1:cfg.k]) + sens @ (np.conj(h) @ prec.w[:, cfg.k:])
    p_sig = np.mean(np.abs(rx_sig) ** 2)
    p_int = np.mean(np.abs(rx_int) ** 2)
    mc = p_sig / (p_int + sig)
    se = 3 / math.sqrt(n)   # relative error guard, generous
    assert sinr(prec, h, 0, sig) == pytest.approx(mc, rel=5 * se + 0.01)


def test_illumination_value_and_scaling():
    m = 4
    a = steering_vector(0.3, m)
    g = 0.01 * np.conj(a)
    w = np.zeros((m, m + 1), dtype=complex)
    w[:, 0] = a / np.linalg.norm(a)          # beam straight at the target
    prec = Precoder(w=w, p_d_w=1.0, k=1)
    # g^H W W^H g with W one unit column parallel to conj(g): |g^H w|^2
    expect = abs(np.vdot(g, w[:, 0])) ** 2
    assert illumination(prec, g) == pytest.approx(expect, rel=1e-12)
    # doubling the power budget doubles Q
    prec2 = Precoder(w=math.sqrt(2) * w, p_d_w=2.0, k=1)
    assert illumination(prec2, g) == pytest.approx(2 * expect, rel=1e-12)


def test_illumination_phase_invariance():
    cfg = small_scene_cfg()
    scene = sample_scene(cfg, RngStream(3, 0))
    prec = _rand_precoder(cfg.m, cfg.k, 1.0, 2)
    g = scene.targets[0].channel
    base = illumination(prec, g)
    rot = Precoder(w=prec.w * np.exp(1j * 0.73), p_d_w=prec.p_d_w, k=prec.k)
    assert illumination(rot, g) == pytest.approx(base, rel=1e-12)
    assert np.allclose(all_sinr(rot, scene, cfg.sigma2_w),
                       all_sinr(prec, scene, cfg.sigma2_w), rtol=1e-12)


def test_illumination_monte_carlo():
    # Q_m equals the expected beampattern power E|g^H x|^2 under unit-power
    # random payloads
    cfg = small_scene_cfg()
    scene = sample_scene(cfg, RngStream(4, 0))
    prec = _rand_precoder(cfg.m, cfg.k, 1.0, 3)
    g = scene.targets[1].channel
    n = 100_000
    rng = RngStream(4, 9)
    acc = 0.0
    for i in range(n):
        sym = sample_symbols(cfg.k, cfg.m, rng)
        x = downlink_tx(prec, sym)
        acc += abs(np.vdot(g, x)) ** 2
    mc = acc / n
    assert illumination(prec, g) == pytest.approx(mc, rel=0.02)


def test_worst_case_illumination_argmin_and_ties():
    m = 4
    strong = _target(0.2, m, gain=1.0)
    weak = _target(-0.8, m, gain=0.01)
    w = np.zeros((m, m + 1), dtype=complex)
    w[:, 0] = steering_vector(0.2, m) / 2.0
    prec = Precoder(w=w, p_d_w=1.0, k=1)

    scene = _scene_with(np.ones((1, m), dtype=complex), [strong, weak])
    q, idx = worst_case_illumination(prec, scene)
    assert idx == 1
    assert q == pytest.approx(illumination(prec, weak.channel), rel=1e-12)

    # duplicated target: tie resolves to the lowest index
    scene2 = _scene_with(np.ones((1, m), dtype=complex), [weak, weak, strong])
    _, idx2 = worst_case_illumination(prec, scene2)
    assert idx2 == 0


def test_constraint_slack_example():
    # gamma = 10 linear against a 5 dB target: slack = 10 - 10^0.5
    h = np.array([1.0, 0.0], dtype=complex)
    w = np.zeros((2, 3), dtype=complex)
    sig = 0.1
    w[0, 0] = 1.0   # signal power 1.0 -> SINR 1.0/0.1 = 10
    prec = Precoder(w=w, p_d_w=1.0, k=1)
    scene = _scene_with(h[None, :], [_target(0.1, 2)])
    slack = constraint_slack(prec, scene, 5.0, sig)
    assert slack[0] == pytest.approx(10 - 10 ** 0.5, rel=1e-12)


def test_aggregate_sinr_over_realizations():
    # two single-user realizations with SINR 1.0 and 3.0 -> mean 2.0 -> 3.01 dB
    sig = 0.1
    h = np.array([1.0, 0.0], dtype=complex)
    scene = _scene_with(h[None, :], [_target(0.1, 2)])
    entries = []
    for p_sig in (0.1, 0.3):
        w = np.zeros((2, 3), dtype=complex)
        w[0, 0] = math.sqrt(p_sig)
        entries.append((Precoder(w=w, p_d_w=p_sig, k=1), scene))
    mean = per_user_mean_sinr(entries, sig)
    assert mean[0] == pytest.approx(2.0, rel=1e-12)
    assert worst_avg_sinr(entries, sig) == pytest.approx(10 * math.log10(2.0), rel=1e-12)
    with pytest.raises(InvalidArgumentError):
        per_user_mean_sinr([], sig)


def test_power_check_and_views():
    prec = _rand_precoder(4, 2, 2.0, 4)
    assert prec.power_ok()
    assert prec.comm.shape == (4, 2)
    assert prec.sens.shape == (4, 4)
    bad = Precoder(w=prec.w * 1.001, p_d_w=2.0, k=2)
    assert not bad.power_ok()


def test_shape_and_range_guards():
    prec = _rand_precoder(4, 2, 1.0, 5)
    cfg = small_scene_cfg()
    scene = sample_scene(cfg, RngStream(5, 0))
    with pytest.raises(InvalidArgumentError):
        sinr(prec, scene.h_mat[0], 2, cfg.sigma2_w)
    with pytest.raises(InvalidArgumentError):
        sinr(prec, scene.h_mat[0], 0, 0.0)
    with pytest.raises(ShapeError):
        sinr(prec, np.ones(3, dtype=complex), 0, 1e-10)
    with pytest.raises(ShapeError):
        illumination(prec, np.ones(3, dtype=complex))
    with pytest.raises(ShapeError):
        downlink_tx(prec, DownlinkSymbols(data=np.ones(3, dtype=complex),
                                          sensing=np.ones(4, dtype=complex)))
    scene6 = sample_scene(small_scene_cfg(k=3), RngStream(5, 1))
    with pytest.raises(ShapeError):
        all_sinr(prec, scene6, 1e-10)
