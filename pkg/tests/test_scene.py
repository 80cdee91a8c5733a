import math

import numpy as np
import pytest

from isaclearn.errors import ConfigError, InvalidArgumentError
from isaclearn.linalg import RngStream
from isaclearn.scene import (SceneConfig, pathloss_gain, rcs_draw, sample_scene,
                             steering_vector)

from conftest import small_scene_cfg


def test_steering_broadside():
    assert np.allclose(steering_vector(0.0, 4), np.ones(4))


def test_steering_thirty_degrees():
    # sin(30 deg) = 1/2 walks the phase by -pi/2 per element
    a = steering_vector(math.radians(30.0), 4)
    assert np.allclose(a, [1, -1j, -1, 1j], atol=1e-12)


def test_steering_unit_modulus_and_energy():
    for theta in (-1.2, -0.3, 0.7, 1.5):
        a = steering_vector(theta, 16)
        assert np.allclose(np.abs(a), 1.0, atol=1e-12)
        assert np.vdot(a, a).real == pytest.approx(16.0, rel=1e-12)


def test_steering_conjugate_symmetry():
    for theta in (0.1, 0.8, 1.3):
        assert np.allclose(steering_vector(-theta, 8),
                           np.conj(steering_vector(theta, 8)), atol=1e-12)


def test_steering_rejects_empty_array():
    with pytest.raises(InvalidArgumentError):
        steering_vector(0.0, 0)


def test_pathloss_values():
    # radar model at 10 m: 30 + 22*log10(10) = 52 dB
    assert pathloss_gain(10.0, 30.0, 22.0) == pytest.approx(10 ** -5.2, rel=1e-12)
    # downlink model at 20 m: 30 + 36*log10(20) = 76.85 dB
    expect = 10 ** (-(30 + 36 * math.log10(20)) / 10)
    assert pathloss_gain(20.0, 30.0, 36.0) == pytest.approx(expect, rel=1e-12)
    with pytest.raises(InvalidArgumentError):
        pathloss_gain(0.0, 30.0, 22.0)


def test_target_channel_identity():
    # g^H conj(a(theta)) recovers alpha * M: the array is fully coherent
    # toward the true angle.
    scene = sample_scene(small_scene_cfg(t=5), RngStream(2, 0))
    for tg in scene.targets:
        a = steering_vector(tg.angle_rad, scene.m)
        lhs = np.vdot(tg.channel, np.conj(a))   # = g^H conj(a)
        assert lhs == pytest.approx(tg.gain * scene.m, rel=1e-12)
        # and |alpha|^2 follows the radar pathloss at the sampled range
        expect = pathloss_gain(tg.range_m, 30.0, 22.0)
        assert abs(tg.gain) ** 2 == pytest.approx(expect, rel=1e-12)


def test_scene_reproducible_and_stream_sensitive():
    cfg = small_scene_cfg()
    s1 = sample_scene(cfg, RngStream(5, 1))
    s2 = sample_scene(cfg, RngStream(5, 1))
    s3 = sample_scene(cfg, RngStream(5, 2))
    assert np.array_equal(s1.h_mat, s2.h_mat)
    assert s1.targets[0].angle_rad == s2.targets[0].angle_rad
    assert not np.array_equal(s1.h_mat, s3.h_mat)


def test_geometry_respects_ranges():
    cfg = small_scene_cfg(k=40, t=40)
    scene = sample_scene(cfg, RngStream(8, 0))
    assert scene.user_pos_m[:, 0].min() >= cfg.user_x_range_m[0]
    assert scene.user_pos_m[:, 0].max() <= cfg.user_x_range_m[1]
    assert scene.user_pos_m[:, 1].min() >= cfg.user_y_range_m[0]
    assert scene.user_pos_m[:, 1].max() <= cfg.user_y_range_m[1]
    lo, hi = np.radians(cfg.target_angle_range_deg)
    for tg in scene.targets:
        assert lo <= tg.angle_rad <= hi
        assert 5.0 <= tg.range_m <= 20.0


def test_zero_width_ranges_pin_geometry():
    cfg = small_scene_cfg(user_x_range_m=(12.0, 12.0), user_y_range_m=(9.0, 9.0),
                          target_angle_range_deg=(-45.0, -45.0),
                          target_range_range_m=(10.0, 10.0))
    scene = sample_scene(cfg, RngStream(3, 0))
    assert np.allclose(scene.user_pos_m, [[12.0, 9.0]] * cfg.k)
    assert all(tg.angle_rad == pytest.approx(math.radians(-45.0)) for tg in scene.targets)
    assert all(tg.range_m == 10.0 for tg in scene.targets)
    # fading still random
    assert not np.allclose(scene.h_mat[0], scene.h_mat[1])


def test_channel_power_matches_pathloss():
    # E||h_k||^2 = M * linear pathloss gain; pin geometry to make the
    # expectation exact and average the fading out.
    cfg = small_scene_cfg(m=8, k=50, user_x_range_m=(12.0, 12.0),
                          user_y_range_m=(9.0, 9.0))
    total = 0.0
    n_draws = 200
    for i in range(n_draws):
        scene = sample_scene(cfg, RngStream(77, i))
        total += np.mean(np.sum(np.abs(scene.h_mat) ** 2, axis=1))
    mean_power = total / n_draws
    d = math.hypot(12.0, 9.0)
    expect = 8 * pathloss_gain(d, 30.0, 36.0)
    # 10^4 channel draws: relative standard error ~ 1/sqrt(10^4/8)
    assert mean_power == pytest.approx(expect, rel=0.1)


def test_farther_users_weaker():
    near = small_scene_cfg(k=64, user_x_range_m=(10.0, 10.0), user_y_range_m=(0.0, 0.0))
    far = small_scene_cfg(k=64, user_x_range_m=(40.0, 40.0), user_y_range_m=(0.0, 0.0))
    p_near = p_far = 0.0
    for i in range(50):
        p_near += np.mean(np.abs(sample_scene(near, RngStream(4, i)).h_mat) ** 2)
        p_far += np.mean(np.abs(sample_scene(far, RngStream(4, i)).h_mat) ** 2)
    assert p_far < p_near


def test_rcs_modes():
    rng = RngStream(6, 0)
    for _ in range(10):
        assert abs(rcs_draw(rng, "unit")) == pytest.approx(1.0, rel=1e-12)
    # Swerling draw: |beta|^2 exponential with unit mean
    vals = [abs(rcs_draw(RngStream(6, i), "swerling1")) ** 2 for i in range(4000)]
    assert np.mean(vals) == pytest.approx(1.0, abs=0.06)
    with pytest.raises(InvalidArgumentError):
        rcs_draw(rng, "rayleigh")


def test_config_validation():
    with pytest.raises(ConfigError):
        SceneConfig(m=0)
    with pytest.raises(ConfigError):
        SceneConfig(user_x_range_m=(5.0, 1.0))
    with pytest.raises(ConfigError):
        SceneConfig(target_range_range_m=(0.0, 10.0))
    with pytest.raises(ConfigError):
        SceneConfig(rcs_mode="other")


def test_config_roundtrip():
    cfg = small_scene_cfg(sigma2_dbm=-90.0)
    d = cfg.to_dict()
    assert d["user_x_range_m"] == [15.0, 18.0]
    assert SceneConfig.from_dict(d) == cfg
    d["bogus"] = 1
    with pytest.raises(ConfigError):
        SceneConfig.from_dict(d)


def test_noise_power_properties():
    cfg = SceneConfig()
    assert cfg.sigma2_w == pytest.approx(10 ** (-124 / 10), rel=1e-12)
    assert cfg.nu2_w == pytest.approx(1e-10, rel=1e-12)
