import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fifty_object_config
from indoor_lidar import _kernels as K
from indoor_lidar.errors import InvalidArgumentError, PreconditionError
from indoor_lidar.geometry import Box, Hit, Pose, Ray
from indoor_lidar.scene import ObjectInstance, Room, Scene, generate_scene
from indoor_lidar.sensor import (
    WORKERS_ENV,
    RayStream,
    SensorConfig,
    apply_noise,
    build_scan_pattern,
    default_workers,
    shade_intensity,
    simulate_scan,
)


@pytest.fixture(scope="module")
def scene():
    return generate_scene(fifty_object_config(), 9)


def _pose(scene):
    return Pose.from_yaw(0.2, (scene.room.width / 2, scene.room.depth / 2, 0.6))


class TestConfig:
    def test_default_pattern_size(self):
        cfg = SensorConfig()
        assert cfg.azimuth_count == 3600
        assert cfg.rays_per_frame == 115_200
        p = build_scan_pattern(cfg)
        assert len(p) == 115_200
        assert np.allclose(np.unique(p.elevation)[[0, -1]], np.radians([-22.5, 22.5]))

    def test_single_channel_may_have_flat_fov(self):
        cfg = SensorConfig(channels=1, vertical_fov=(0.0, 0.0))
        assert np.all(build_scan_pattern(cfg).elevation == 0.0)

    @pytest.mark.parametrize("kwargs", [
        {"channels": 0}, {"channels": 4, "vertical_fov": (0.1, 0.1)}, {"azimuth_step": 0.0},
        {"max_range": -1.0}, {"range_noise_sigma": -0.1}, {"dropout_probability": 1.5},
        {"intensity_falloff_alpha": -1.0},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            SensorConfig(**kwargs)

    def test_workers_env(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert default_workers() == 3


class TestNoise:
    def test_noise_statistics(self):
        cfg = SensorConfig(range_noise_sigma=0.05)
        r = np.array([apply_noise(10.0, cfg, RayStream(1, 0, i)) for i in range(20000)])
        # standard errors: mean 3.5e-4, std 2.5e-4
        assert r.mean() == pytest.approx(10.0, abs=2e-3)
        assert r.std() == pytest.approx(0.05, abs=2e-3)

    def test_dropout_rate(self):
        cfg = SensorConfig(dropout_probability=0.3)
        kept = [apply_noise(5.0, cfg, RayStream(2, 1, i)) for i in range(20000)]
        frac = sum(k is None for k in kept) / len(kept)
        assert frac == pytest.approx(0.3, abs=0.015)

    def test_edge_probabilities(self):
        assert apply_noise(5.0, SensorConfig(range_noise_sigma=0), RayStream(0, 0, 0)) == 5.0
        cfg = SensorConfig(dropout_probability=1.0)
        assert all(apply_noise(5.0, cfg, RayStream(0, 0, i)) is None for i in range(1000))

    @given(st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
    def test_noisy_range_positive(self, seed, frame, ray):
        r = apply_noise(0.01, SensorConfig(range_noise_sigma=1.0), RayStream(seed, frame, ray))
        assert r > 0

    def test_rejects_nonpositive_range(self):
        with pytest.raises(InvalidArgumentError):
            apply_noise(0.0, SensorConfig(), RayStream(0, 0, 0))


class TestIntensity:
    def test_formula(self):
        cfg = SensorConfig(intensity_falloff_alpha=0.01)
        hit = Hit(2.0, 0, np.array([-1.0, 0, 0]), np.array([2.0, 0, 0]))
        ray = Ray((0, 0, 0), (math.cos(0.5), math.sin(0.5), 0))
        assert shade_intensity(hit, ray, 0.8, cfg) == pytest.approx(0.8 * math.cos(0.5) / (1 + 0.01 * 4))

    def test_clamped(self):
        hit = Hit(0.1, 0, np.array([0, 0, 1.0]), np.zeros(3))
        assert shade_intensity(hit, Ray((0, 0, 0), (0, 0, 1)), 1.0, SensorConfig()) == 0.0


class TestSimulateScan:
    def test_invariants(self, scene):
        cfg = SensorConfig(range_noise_sigma=0.02, dropout_probability=0.1)
        res = simulate_scan(scene, _pose(scene), build_scan_pattern(cfg), cfg, 5, timestamp_ns=17)
        pts = res.cloud.points
        assert pts.dtype == np.float32 and pts.shape[1] == 4
        rng_ = np.linalg.norm(pts[:, :3].astype(np.float64), axis=1)
        assert np.all(rng_ > 0) and np.all(rng_ <= cfg.max_range * (1 + 1e-6))
        assert np.all((pts[:, 3] >= 0) & (pts[:, 3] <= 1))
        assert sum(res.hits_per_object.values()) + res.shell_hits == len(pts)
        assert set(res.hits_per_object) <= {o.object_id for o in scene.objects}
        assert res.cloud.timestamp_ns == 17
        assert np.all(np.diff(res.cloud.ray_index) > 0)
        assert len(pts) < cfg.rays_per_frame  # dropout

    def test_worker_count_does_not_change_output(self, scene):
        cfg = SensorConfig()
        pattern = build_scan_pattern(cfg)
        outs = [simulate_scan(scene, _pose(scene), pattern, cfg, 123, frame_id=4, workers=w) for w in (1, 2, 8)]
        assert outs[0].cloud == outs[1].cloud == outs[2].cloud
        assert np.array_equal(outs[0].point_object_ids, outs[2].point_object_ids)

    def test_seed_and_frame_change_noise(self, scene):
        cfg = SensorConfig()
        pattern = build_scan_pattern(cfg)
        a = simulate_scan(scene, _pose(scene), pattern, cfg, 1)
        assert not (a.cloud == simulate_scan(scene, _pose(scene), pattern, cfg, 2).cloud)
        assert not (a.cloud == simulate_scan(scene, _pose(scene), pattern, cfg, 1, frame_id=1).cloud)

    def test_noise_free_points_match_geometry(self):
        room = Room(20, 20, 4)
        scene = Scene(room, (ObjectInstance(0, "Box", (8, 5, 1), 0.0, Box((1, 1, 1)), 0.6),), 0)
        cfg = SensorConfig(channels=1, vertical_fov=(0, 0), azimuth_step=math.radians(1), range_noise_sigma=0)
        res = simulate_scan(scene, Pose.from_yaw(0.0, (5, 5, 1)), build_scan_pattern(cfg), cfg, 0)
        first = res.cloud.points[0]
        assert res.point_object_ids[0] == 0
        assert np.allclose(first[:3], [2, 0, 0], atol=1e-6)
        assert first[3] == pytest.approx(0.6 / (1 + 0.001 * 4), rel=1e-6)

    def test_points_are_in_sensor_frame(self):
        room = Room(20, 20, 4)
        scene = Scene(room, (ObjectInstance(0, "Box", (5, 8, 1), 0.0, Box((1, 1, 1)), 0.6),), 0)
        cfg = SensorConfig(channels=1, vertical_fov=(0, 0), azimuth_step=math.radians(90), range_noise_sigma=0)
        res = simulate_scan(scene, Pose.from_yaw(math.pi / 2, (5, 5, 1)), build_scan_pattern(cfg), cfg, 0)
        assert res.point_object_ids[0] == 0
        assert np.allclose(res.cloud.points[0, :3], [2, 0, 0], atol=1e-6)

    def test_max_range_gates_points(self):
        scene = Scene(Room(100, 100, 4), (), 0)
        cfg = SensorConfig(max_range=10.0, range_noise_sigma=0.0)
        res = simulate_scan(scene, Pose.from_yaw(0, (50, 50, 2)), build_scan_pattern(cfg), cfg, 0)
        r = np.linalg.norm(res.cloud.xyz, axis=1)
        assert len(r) > 0 and r.max() <= 10.0 + 1e-5
        assert res.hits_per_object == {}

    def test_invalid_scene_rejected(self):
        objs = (ObjectInstance(0, "Box", (1, 1, 1), 0, Box((1, 1, 1)), 0.5),
                ObjectInstance(1, "Box", (1.5, 1, 1), 0, Box((1, 1, 1)), 0.5))
        cfg = SensorConfig()
        with pytest.raises(PreconditionError):
            simulate_scan(Scene(Room(5, 5, 3), objs, 0), Pose.identity(), build_scan_pattern(cfg), cfg, 0)

    def test_kernel_releases_gil(self):
        assert K.cast_rays.targetoptions.get("nogil") is True

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**64 - 1))
    def test_deterministic_for_any_seed(self, seed):
        scene = generate_scene(fifty_object_config(), 1)
        cfg = SensorConfig(channels=4, azimuth_step=math.radians(2), dropout_probability=0.2)
        p = build_scan_pattern(cfg)
        a = simulate_scan(scene, _pose(scene), p, cfg, seed, workers=1)
        b = simulate_scan(scene, _pose(scene), p, cfg, seed, workers=4)
        assert a.cloud == b.cloud
