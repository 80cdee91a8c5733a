import numpy as np
import pytest

from isaclearn.linalg import RngStream
from isaclearn.scene import SceneConfig, sample_scene
from isaclearn.sounding import SoundingConfig, sound_scene


def small_scene_cfg(**overrides):
    """A fast M=4, K=2, T=2 configuration with the default link budget."""
    base = dict(m=4, k=2, t=2)
    base.update(overrides)
    return SceneConfig(**base)


def small_sounding_cfg(**overrides):
    base = dict(lp=6, lr=8)
    base.update(overrides)
    return SoundingConfig(**base)


@pytest.fixture
def small_sample():
    """One deterministic (scene, sounding) pair at the small size."""
    cfg = small_scene_cfg()
    snd = small_sounding_cfg()
    rng = RngStream(1234, 0)
    scene = sample_scene(cfg, rng)
    data = sound_scene(scene, snd, rng, cfg.nu2_w)
    return cfg, snd, scene, data
