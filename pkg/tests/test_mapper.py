import numpy as np
import pytest
from sklearn.base import clone

from elevmap import DataError, ElevationMapper, PointCloud, Pose


def cloud_at(rng, center, n=500, z=0.0, spread=2.0, z_noise=0.02):
    pts = np.empty((n, 3))
    pts[:, 0] = center[0] + rng.uniform(-spread, spread, n)
    pts[:, 1] = center[1] + rng.uniform(-spread, spread, n)
    pts[:, 2] = z + rng.uniform(-z_noise, z_noise, n)
    return pts


class TestElevationMapper:
    def test_sklearn_params_round_trip(self):
        m = ElevationMapper(cells=64, resolution=0.05)
        params = m.get_params()
        assert params["cells"] == 64
        assert params["resolution"] == 0.05
        m2 = clone(m)
        assert m2.get_params() == params

    def test_partial_fit_accumulates(self):
        rng = np.random.default_rng(0)
        m = ElevationMapper(cells=25, resolution=0.2)
        m.partial_fit(cloud_at(rng, (2.5, 2.5)), body_xy=(2.5, 2.5))
        first = m.map_.count.sum()
        m.partial_fit(cloud_at(rng, (2.5, 2.5)))
        assert m.map_.count.sum() > first
        assert m.n_frames_ == 2

    def test_fit_resets(self):
        rng = np.random.default_rng(1)
        m = ElevationMapper(cells=25, resolution=0.2)
        m.partial_fit(cloud_at(rng, (2.5, 2.5)), body_xy=(2.5, 2.5))
        m.fit(cloud_at(rng, (2.5, 2.5)), body_xy=(2.5, 2.5))
        assert m.n_frames_ == 1

    def test_accepts_pointcloud_objects(self):
        rng = np.random.default_rng(2)
        m = ElevationMapper(cells=25, resolution=0.2)
        cloud = PointCloud(points=cloud_at(rng, (2.5, 2.5)), stamp=0.0, reported_pose=Pose())
        m.partial_fit(cloud, body_xy=(2.5, 2.5))
        assert m.map_.count.sum() > 0

    def test_outlier_band_rejects_far_heights(self):
        rng = np.random.default_rng(3)
        m = ElevationMapper(cells=25, resolution=0.2, outlier_band=2.0)
        pts = cloud_at(rng, (2.5, 2.5), z=0.0)
        pts[:10, 2] = 50.0  # spurious returns far above the reference
        m.partial_fit(pts, body_xy=(2.5, 2.5), reference=0.0)
        assert m.map_.mean.max() < 1.0

    def test_recenter_follows_body(self):
        rng = np.random.default_rng(4)
        m = ElevationMapper(cells=25, resolution=0.2)
        m.partial_fit(cloud_at(rng, (2.5, 2.5)), body_xy=(2.5, 2.5))
        g0 = m.map_.grid
        m.partial_fit(cloud_at(rng, (4.5, 2.5)), body_xy=(4.5, 2.5))
        assert m.map_.grid.ox_cells == g0.ox_cells + 10

    def test_transform_shape_and_reference(self):
        rng = np.random.default_rng(5)
        m = ElevationMapper(cells=25, resolution=0.2)
        m.partial_fit(cloud_at(rng, (2.5, 2.5), z=1.0), body_xy=(2.5, 2.5), reference=1.0)
        t = m.transform()
        assert t.shape == (7, 25, 25)
        assert t.dtype == np.float32
        obs = t[0] > 0
        # heights exported relative to the reference
        assert np.abs(t[1][obs]).max() < 0.05

    def test_transform_before_fit_raises(self):
        with pytest.raises(DataError):
            ElevationMapper().transform()

    def test_snapshot_isolated(self):
        rng = np.random.default_rng(6)
        m = ElevationMapper(cells=25, resolution=0.2)
        m.partial_fit(cloud_at(rng, (2.5, 2.5)), body_xy=(2.5, 2.5))
        snap = m.snapshot()
        m.partial_fit(cloud_at(rng, (2.5, 2.5)))
        assert snap.count.sum() < m.map_.count.sum()

    def test_observation_rate_region(self):
        rng = np.random.default_rng(7)
        m = ElevationMapper(cells=25, resolution=0.2)
        m.partial_fit(cloud_at(rng, (2.5, 2.5), n=4000), body_xy=(2.5, 2.5))
        assert 0.0 < m.observation_rate() <= 1.0
