import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elevmap import (
    AlignmentError,
    DataError,
    FrameFeatures,
    GridSpec,
    Normalization,
    PointFeatureMap,
    decay_counts,
    denormalize,
    integrate,
    observation_rate,
    rasterize,
    recenter,
    to_network_input,
)


def random_frame_points(rng, grid, n_points, z_range=(0.0, 2.0)):
    lo = np.array(grid.origin)
    extent = grid.extent
    pts = np.empty((n_points, 3))
    pts[:, 0] = rng.uniform(lo[0], lo[0] + extent, n_points)
    pts[:, 1] = rng.uniform(lo[1], lo[1] + extent, n_points)
    pts[:, 2] = rng.uniform(*z_range, n_points)
    return pts


def batch_stats(values):
    """Two-pass batch mean / population variance (independent of the
    recursive update path)."""
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean()
    return mean, ((values - mean) ** 2).mean()


class TestRasterize:
    def test_empty_cloud_all_zero(self):
        grid = GridSpec(8, 0.5)
        f = rasterize(np.zeros((0, 3)), grid)
        for arr in (f.count, f.sum_z, f.sum_zz, f.z_max, f.z_min):
            assert not arr.any()

    def test_two_points_one_cell(self):
        grid = GridSpec(4, 1.0)
        pts = np.array([[0.5, 0.5, 0.1], [0.7, 0.3, 0.3]])
        f = rasterize(pts, grid)
        assert f.count[0, 0] == 2
        assert f.sum_z[0, 0] == pytest.approx(0.4)
        assert f.sum_zz[0, 0] == pytest.approx(0.10)
        assert f.z_max[0, 0] == pytest.approx(0.3)
        assert f.z_min[0, 0] == pytest.approx(0.1)
        assert f.count.sum() == 2

    def test_out_of_bounds_dropped(self):
        grid = GridSpec(4, 1.0)
        pts = np.array([[-0.1, 0.5, 1.0], [4.1, 0.5, 1.0], [0.5, 7.0, 1.0]])
        f = rasterize(pts, grid)
        assert f.count.sum() == 0

    def test_matches_naive_grouping_oracle(self):
        rng = np.random.default_rng(42)
        grid = GridSpec(16, 0.25, ox_cells=-8, oy_cells=-8)
        pts = random_frame_points(rng, grid, 100_000)
        # widen slightly so some points fall outside
        pts[:, 0] += rng.uniform(-0.5, 0.5, len(pts))
        f = rasterize(pts, grid)
        # naive per-point grouping
        count = np.zeros((16, 16), dtype=np.int64)
        sum_z = np.zeros((16, 16))
        sum_zz = np.zeros((16, 16))
        z_max = np.full((16, 16), -np.inf)
        z_min = np.full((16, 16), np.inf)
        for x, y, z in pts:
            ix = int(np.floor(x / 0.25)) + 8
            iy = int(np.floor(y / 0.25)) + 8
            if not (0 <= ix < 16 and 0 <= iy < 16):
                continue
            count[iy, ix] += 1
            sum_z[iy, ix] += z
            sum_zz[iy, ix] += z * z
            z_max[iy, ix] = max(z_max[iy, ix], z)
            z_min[iy, ix] = min(z_min[iy, ix], z)
        z_max[count == 0] = 0.0
        z_min[count == 0] = 0.0
        assert np.array_equal(f.count, count)
        np.testing.assert_allclose(f.sum_z, sum_z, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(f.sum_zz, sum_zz, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(f.z_max, z_max)
        np.testing.assert_array_equal(f.z_min, z_min)

    def test_frame_invariants(self):
        rng = np.random.default_rng(7)
        grid = GridSpec(10, 0.2)
        f = rasterize(random_frame_points(rng, grid, 5000), grid)
        occupied = f.count > 0
        assert np.all(f.z_min[occupied] <= f.z_max[occupied])
        # Cauchy-Schwarz: sum(z^2) >= (sum z)^2 / c
        lhs = f.sum_zz[occupied]
        rhs = f.sum_z[occupied] ** 2 / f.count[occupied]
        assert np.all(lhs >= rhs - 1e-12)
        empty = ~occupied
        for arr in (f.sum_z, f.sum_zz, f.z_max, f.z_min):
            assert not arr[empty].any()


class TestIntegrate:
    def test_mean_update_single_point(self):
        # maintained C=3, E=1.0; frame c=1, sum z=2.0 -> C=4, E=1.25
        grid = GridSpec(1, 1.0)
        pfm = PointFeatureMap.zero(grid, decay=1.0, count_cap=np.inf)
        pfm.count[:] = 3.0
        pfm.mean[:] = 1.0
        pfm.frames[:] = 1.0
        frame = rasterize(np.array([[0.5, 0.5, 2.0]]), grid)
        integrate(pfm, frame)
        assert pfm.count[0, 0] == pytest.approx(4.0)
        assert pfm.mean[0, 0] == pytest.approx(1.25)

    def test_variance_update_matches_batch(self):
        # maintained stats of {0.5, 1.5}; frame adds {0.5, 1.5}
        grid = GridSpec(1, 1.0)
        pfm = PointFeatureMap.zero(grid, decay=1.0, count_cap=np.inf)
        first = rasterize(np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 1.5]]), grid)
        integrate(pfm, first)
        assert pfm.count[0, 0] == 2.0
        assert pfm.mean[0, 0] == pytest.approx(1.0)
        assert pfm.var[0, 0] == pytest.approx(0.25)
        second = rasterize(np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 1.5]]), grid)
        integrate(pfm, second)
        assert pfm.count[0, 0] == pytest.approx(4.0)
        assert pfm.mean[0, 0] == pytest.approx(1.0)
        assert pfm.var[0, 0] == pytest.approx(0.25)

    def test_streaming_equals_batch_over_sequence(self):
        rng = np.random.default_rng(3)
        grid = GridSpec(8, 0.5)
        pfm = PointFeatureMap.zero(grid, decay=1.0, count_cap=np.inf)
        all_z = [[] for _ in range(64)]
        frame_max = [[] for _ in range(64)]
        frame_min = [[] for _ in range(64)]
        for _ in range(12):
            pts = random_frame_points(rng, grid, 300)
            frame = rasterize(pts, grid)
            integrate(pfm, frame)
            for cell in range(64):
                iy, ix = divmod(cell, 8)
                in_cell = (
                    (np.floor(pts[:, 0] / 0.5).astype(int) == ix)
                    & (np.floor(pts[:, 1] / 0.5).astype(int) == iy)
                )
                zs = pts[in_cell, 2]
                if len(zs):
                    all_z[cell].extend(zs)
                    frame_max[cell].append(zs.max())
                    frame_min[cell].append(zs.min())
        for cell in range(64):
            if not all_z[cell]:
                continue
            iy, ix = divmod(cell, 8)
            mean, var = batch_stats(all_z[cell])
            assert pfm.count[iy, ix] == pytest.approx(len(all_z[cell]), rel=1e-9)
            assert pfm.mean[iy, ix] == pytest.approx(mean, rel=1e-9, abs=1e-12)
            assert pfm.var[iy, ix] == pytest.approx(var, rel=1e-9, abs=1e-12)
            mmean, mvar = batch_stats(frame_max[cell])
            assert pfm.max_mean[iy, ix] == pytest.approx(mmean, rel=1e-9, abs=1e-12)
            assert pfm.max_var[iy, ix] == pytest.approx(mvar, rel=1e-9, abs=1e-12)
            nmean, nvar = batch_stats(frame_min[cell])
            assert pfm.min_mean[iy, ix] == pytest.approx(nmean, rel=1e-9, abs=1e-12)
            assert pfm.min_var[iy, ix] == pytest.approx(nvar, rel=1e-9, abs=1e-12)
            assert pfm.frames[iy, ix] == len(frame_max[cell])

    def test_untouched_cells_keep_state(self):
        grid = GridSpec(4, 1.0)
        pfm = PointFeatureMap.zero(grid)
        integrate(pfm, rasterize(np.array([[0.5, 0.5, 1.0]]), grid))
        before = pfm.snapshot()
        integrate(pfm, rasterize(np.array([[3.5, 3.5, 2.0]]), grid))
        assert pfm.count[0, 0] == before.count[0, 0]
        assert pfm.mean[0, 0] == before.mean[0, 0]
        assert pfm.count[3, 3] > 0

    def test_grid_mismatch_raises(self):
        pfm = PointFeatureMap.zero(GridSpec(4, 1.0))
        frame = rasterize(np.zeros((0, 3)), GridSpec(4, 0.5))
        with pytest.raises(AlignmentError):
            integrate(pfm, frame)

    def test_extrema_ordering_on_iid_data(self):
        # heights independent of per-frame counts: the frame-weighted
        # extrema means bracket the point-weighted height mean
        rng = np.random.default_rng(9)
        grid = GridSpec(4, 1.0)
        pfm = PointFeatureMap.zero(grid, decay=1.0, count_cap=np.inf)
        for _ in range(20):
            pts = random_frame_points(rng, grid, 200)
            integrate(pfm, rasterize(pts, grid))
        obs = pfm.frames >= 1
        assert np.all(pfm.min_mean[obs] <= pfm.mean[obs] + 1e-12)
        assert np.all(pfm.mean[obs] <= pfm.max_mean[obs] + 1e-12)

    def test_variance_never_meaningfully_negative(self):
        rng = np.random.default_rng(5)
        grid = GridSpec(8, 0.5)
        pfm = PointFeatureMap.zero(grid)
        for _ in range(50):
            integrate(pfm, rasterize(random_frame_points(rng, grid, 400), grid))
        for arr in (pfm.var, pfm.max_var, pfm.min_var):
            assert arr.min() >= -1e-9


class TestDecay:
    def test_decay_formula(self):
        grid = GridSpec(1, 1.0)
        pfm = PointFeatureMap.zero(grid, decay=0.90, count_cap=100.0)
        pfm.count[:] = 100.0
        frame = rasterize(np.tile([[0.5, 0.5, 1.0]], (5, 1)), grid)
        decay_counts(pfm, frame)
        assert pfm.count[0, 0] == pytest.approx(95.0)

    def test_no_new_points_no_decay(self):
        grid = GridSpec(1, 1.0)
        pfm = PointFeatureMap.zero(grid, decay=0.90, count_cap=100.0)
        pfm.count[:] = 50.0
        pfm.frames[:] = 5.0
        decay_counts(pfm, rasterize(np.zeros((0, 3)), grid))
        assert pfm.count[0, 0] == 50.0
        assert pfm.frames[0, 0] == 5.0

    def test_cap_clamps(self):
        grid = GridSpec(1, 1.0)
        pfm = PointFeatureMap.zero(grid, decay=0.90, count_cap=100.0)
        pfm.count[:] = 10.0
        frame = rasterize(np.tile([[0.5, 0.5, 1.0]], (200, 1)), grid)
        decay_counts(pfm, frame)
        assert pfm.count[0, 0] == 100.0

    @given(c_old=st.integers(0, 100), c_new=st.integers(0, 200))
    @settings(max_examples=200, deadline=None)
    def test_decay_law_properties(self, c_old, c_new):
        grid = GridSpec(1, 1.0)
        pfm = PointFeatureMap.zero(grid, decay=0.90, count_cap=100.0)
        pfm.count[:] = float(c_old)
        if c_new == 0:
            frame = rasterize(np.zeros((0, 3)), grid)
        else:
            frame = rasterize(np.tile([[0.5, 0.5, 1.0]], (c_new, 1)), grid)
        decay_counts(pfm, frame)
        got = pfm.count[0, 0]
        assert got <= 100.0
        if c_new == 0:
            assert got == c_old
        else:
            assert got == pytest.approx(min(100.0, 0.9 * c_old + c_new))

    def test_integrate_applies_decay_before_mean(self):
        # C=10 at mean 0; decayed weight 9 against 1 new point at 1.0
        grid = GridSpec(1, 1.0)
        pfm = PointFeatureMap.zero(grid, decay=0.90, count_cap=100.0)
        pfm.count[:] = 10.0
        pfm.mean[:] = 0.0
        pfm.frames[:] = 1.0
        integrate(pfm, rasterize(np.array([[0.5, 0.5, 1.0]]), grid))
        assert pfm.mean[0, 0] == pytest.approx(1.0 / 10.0)
        assert pfm.count[0, 0] == pytest.approx(10.0)


class TestRecenter:
    def _seeded_map(self, cells=9):
        rng = np.random.default_rng(1)
        grid = GridSpec(cells, 1.0)
        pfm = PointFeatureMap.zero(grid)
        pts = random_frame_points(rng, grid, 500)
        integrate(pfm, rasterize(pts, grid))
        return pfm

    def test_small_displacement_no_change(self):
        pfm = self._seeded_map()
        before = pfm.snapshot()
        # center cell of a 9-cell grid spans [4, 5); stay inside it
        recenter(pfm, (4.7, 4.2))
        assert pfm.grid == before.grid
        assert np.array_equal(pfm.mean, before.mean)

    def test_shift_one_cell_x(self):
        pfm = self._seeded_map()
        before = pfm.snapshot()
        recenter(pfm, (5.5, 4.5))  # one cell to the right
        assert pfm.grid.ox_cells == before.grid.ox_cells + 1
        assert np.array_equal(pfm.mean[:, :-1], before.mean[:, 1:])
        assert not pfm.mean[:, -1].any()
        assert not pfm.count[:, -1].any()

    def test_composition(self):
        a = self._seeded_map()
        b = a.snapshot()
        recenter(a, (7.5, 2.5))
        recenter(a, (9.5, 1.5))
        recenter(b, (9.5, 1.5))
        assert a.grid == b.grid
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.count, b.count)

    def test_random_walk_overlap_oracle(self):
        # integrate the same frames into a recentered map and a fixed map;
        # surviving cells must match the fixed map on the overlap
        rng = np.random.default_rng(8)
        grid = GridSpec(11, 1.0)
        moving = PointFeatureMap.zero(grid, decay=1.0, count_cap=np.inf)
        fixed = PointFeatureMap.zero(GridSpec(31, 1.0, ox_cells=-10, oy_cells=-10),
                                     decay=1.0, count_cap=np.inf)
        body = np.array([5.5, 5.5])
        ever_left = np.zeros(moving.grid.shape(), dtype=bool)
        for _ in range(50):
            body += rng.uniform(-1.5, 1.5, 2)
            body = np.clip(body, -2.0, 13.0)
            recenter(moving, body)
            pts = np.empty((200, 3))
            pts[:, 0] = body[0] + rng.uniform(-5, 5, 200)
            pts[:, 1] = body[1] + rng.uniform(-5, 5, 200)
            pts[:, 2] = rng.uniform(0, 2, 200)
            integrate(moving, rasterize(pts, moving.grid))
            integrate(fixed, rasterize(pts, fixed.grid))
        # compare every cell of the moving window against the fixed map
        g = moving.grid
        for r in range(g.cells):
            for c in range(g.cells):
                fy = r + g.oy_cells - fixed.grid.oy_cells
                fx = c + g.ox_cells - fixed.grid.ox_cells
                if not (0 <= fy < 31 and 0 <= fx < 31):
                    continue
                # cells that never left the window hold full history;
                # others were reset at some point, so only check the
                # full-history subset: count <= fixed count always
                assert moving.count[r, c] <= fixed.count[fy, fx] + 1e-9
                if moving.count[r, c] == fixed.count[fy, fx] and moving.count[r, c] > 0:
                    assert moving.mean[r, c] == pytest.approx(fixed.mean[fy, fx], rel=1e-9)
                    assert moving.var[r, c] == pytest.approx(fixed.var[fy, fx], rel=1e-9, abs=1e-12)


class TestObservationRate:
    def test_fresh_map_zero(self):
        pfm = PointFeatureMap.zero(GridSpec(10, 0.5))
        assert observation_rate(pfm) == 0.0

    def test_fraction_matches_observed_count(self):
        pfm = PointFeatureMap.zero(GridSpec(125, 0.04))
        pfm.frames[:75, :] = 1.0  # 75 * 125 = 9375 observed of 15625
        assert observation_rate(pfm) == pytest.approx(0.6)

    def test_fully_observed(self):
        pfm = PointFeatureMap.zero(GridSpec(6, 0.5))
        pfm.frames[:] = 2.0
        assert observation_rate(pfm) == 1.0

    def test_region_and_errors(self):
        pfm = PointFeatureMap.zero(GridSpec(10, 0.5))
        pfm.frames[0, 0] = 1.0
        assert observation_rate(pfm, (0, 1, 0, 1)) == 1.0
        assert observation_rate(pfm, (5, 10, 5, 10)) == 0.0
        with pytest.raises(DataError):
            observation_rate(pfm, (3, 3, 0, 5))
        with pytest.raises(DataError):
            observation_rate(pfm, (0, 11, 0, 5))


class TestNetworkInput:
    def _observed_map(self):
        rng = np.random.default_rng(2)
        grid = GridSpec(12, 0.5)
        pfm = PointFeatureMap.zero(grid)
        for _ in range(5):
            integrate(pfm, rasterize(random_frame_points(rng, grid, 300, (0.5, 1.5)), grid))
        return pfm

    def test_all_zero_map_gives_zero_tensor(self):
        pfm = PointFeatureMap.zero(GridSpec(8, 0.5))
        t = to_network_input(pfm, Normalization(height_reference=0.8, count_scale=100.0))
        assert not t.data.any()

    def test_count_channel_unit_at_cap(self):
        pfm = PointFeatureMap.zero(GridSpec(4, 1.0))
        pfm.count[:] = 100.0
        t = to_network_input(pfm)
        assert np.all(t.data[0] == 1.0)
        assert t.data[0].max() <= 1.0

    def test_round_trip(self):
        pfm = self._observed_map()
        norm = Normalization(height_reference=0.731, count_scale=100.0)
        tensor = to_network_input(pfm, norm)
        back = denormalize(tensor)
        obs = pfm.count > 0
        np.testing.assert_allclose(back[0], pfm.count, atol=1e-5)
        for ch, arr in ((1, pfm.mean), (3, pfm.max_mean), (5, pfm.min_mean)):
            np.testing.assert_allclose(back[ch][obs], arr[obs], atol=1e-6)
        for ch, arr in ((2, pfm.var), (4, pfm.max_var), (6, pfm.min_var)):
            np.testing.assert_allclose(back[ch][obs], np.maximum(arr[obs], 0), atol=1e-6)

    def test_non_finite_rejected(self):
        pfm = PointFeatureMap.zero(GridSpec(4, 1.0))
        pfm.mean[0, 0] = np.nan
        with pytest.raises(DataError):
            to_network_input(pfm)

    def test_variance_clamped_on_export(self):
        pfm = PointFeatureMap.zero(GridSpec(4, 1.0))
        pfm.count[0, 0] = 1.0
        pfm.var[0, 0] = -1e-12  # float residue
        t = to_network_input(pfm)
        assert t.data[2].min() >= 0.0
