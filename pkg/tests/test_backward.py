import numpy as np
import pytest

from fovsplat import Camera, RenderConfig, backward, render

from oracles import random_scene


def scene_camera(seed, width=20, height=20):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 21))
    scene = random_scene(rng, n)
    cam = Camera.orbit(
        rng.uniform(0, 360), rng.uniform(15, 45), rng.uniform(3.5, 4.5),
        width=width, height=height, fov_deg=55.0,
    )
    wgt = rng.normal(size=(height, width, 3))
    return scene, cam, wgt


def check_groups(model, cam, wgt, groups, level=1, h=1e-4):
    cfg = RenderConfig(background=(0.1, 0.2, 0.3))

    def loss(m):
        return float((render(m, cam, level, cfg).image * wgt).sum())

    out = render(model, cam, level, cfg)
    grads = backward(model, cam, out, wgt, cfg)
    total = bad = 0
    for name in groups:
        arr = getattr(model, name)
        ga = getattr(grads, name)
        for idx in np.ndindex(arr.shape):
            m2 = model.copy()
            getattr(m2, name)[idx] += h
            m3 = model.copy()
            getattr(m3, name)[idx] -= h
            fd = (loss(m2) - loss(m3)) / (2 * h)
            rel = abs(ga[idx] - fd) / max(abs(ga[idx]), abs(fd), 1e-6)
            total += 1
            bad += rel > 1e-3
    return total, bad


def test_every_parameter_against_finite_differences():
    # a couple of scenes here; the acceptance suite sweeps many more
    total = bad = 0
    for seed in (0, 1, 2, 3):
        scene, cam, wgt = scene_camera(seed)
        t, b = check_groups(scene, cam, wgt, ("positions", "scales", "rotations", "opacities", "sh"))
        total += t
        bad += b
    assert bad / total < 0.01, f"{bad}/{total} gradient checks failed"


def test_override_gradients_and_routing():
    rng = np.random.default_rng(9)
    scene = random_scene(rng, 6)
    bounds = np.array([3, 3, 2, 1, 3, 2], dtype=np.int32)
    m = scene.with_quality_bounds(bounds, level_count=3)
    m.override_opacity[:] = rng.uniform(0.3, 0.7, m.n_overrides)
    m.override_sh_dc[:] = rng.uniform(-0.5, 0.5, (m.n_overrides, 3))
    cam = Camera.orbit(30, 30, 3.5, width=20, height=20, fov_deg=55)
    cfg = RenderConfig(background=(0.1, 0.1, 0.1))
    wgt = rng.normal(size=(20, 20, 3))
    out = render(m, cam, 2, cfg)
    g = backward(m, cam, out, wgt, cfg)
    # a level-2 render leaves base opacity and base DC untouched
    assert np.abs(g.opacities).max() == 0.0
    assert np.abs(g.sh[:, 0, :]).max() == 0.0
    # points not at this level get zero gradient everywhere
    absent = bounds < 2
    assert np.abs(g.positions[absent]).max() == 0.0
    t, b = check_groups(m, cam, wgt, ("override_opacity", "override_sh_dc"), level=2)
    assert b == 0, f"{b}/{t} override gradient checks failed"


def test_fully_occluded_splat_zero_gradient():
    from fovsplat import FrModel
    from fovsplat.sh import rgb_to_dc

    # four nearly opaque full-screen layers in front of a back splat
    n = 5
    model = FrModel(
        positions=np.array([[0, 0, 1.5], [0, 0, 1.6], [0, 0, 1.7], [0, 0, 1.8], [0, 0, 3.0]]),
        scales=np.full((n, 3), 50.0),
        rotations=np.tile([1.0, 0, 0, 0], (n, 1)),
        opacities=np.array([0.99, 0.99, 0.99, 0.99, 0.9]),
        sh=rgb_to_dc(np.full((n, 3), 0.5)).reshape(n, 1, 3),
        quality_bound=np.ones(n, dtype=np.int32),
    ).validate()
    cam = Camera(np.eye(3), np.zeros(3), 20.0, 20.0, 8, 8, 16, 16)
    cfg = RenderConfig()
    out = render(model, cam, 1, cfg)
    wgt = np.ones((16, 16, 3))
    g = backward(model, cam, out, wgt, cfg)
    assert np.abs(g.positions[4]).max() == 0.0
    assert g.opacities[4] == 0.0
    assert np.abs(g.sh[4]).max() == 0.0


def test_uncovered_pixel_zero_gradient(rng):
    scene = random_scene(rng, 3)
    # move one splat far off so it covers nothing near the image center
    scene.positions[0] = [100.0, 100.0, 50.0]
    cam = Camera.orbit(0, 30, 3.5, width=16, height=16)
    cfg = RenderConfig()
    out = render(scene, cam, 1, cfg)
    wgt = np.zeros((16, 16, 3))
    wgt[8, 8] = 1.0  # gradient only through one pixel
    g = backward(scene, cam, out, wgt, cfg)
    assert np.abs(g.positions[0]).max() == 0.0


def test_gradient_accumulation_determinism(rng):
    scene = random_scene(rng, 25)
    cam = Camera.orbit(75, 33, 3.4, width=32, height=32)
    cfg = RenderConfig()
    wgt = np.random.default_rng(0).normal(size=(32, 32, 3))
    out = render(scene, cam, 1, cfg)
    g1 = backward(scene, cam, out, wgt, cfg)
    g2 = backward(scene, cam, out, wgt, cfg)
    assert np.array_equal(g1.positions, g2.positions)
    assert np.array_equal(g1.sh, g2.sh)
