"""Rolling per-cell statistical features over a robot-centric grid.

Each cell of the maintained map carries a decayed point count plus the mean
and population variance of three height series: all observed heights, the
per-frame maxima, and the per-frame minima. A frame is folded in with the
recursive sum-of-squares update

    E(z^2) = Var(z) + E(z)^2

so integration is O(cells) regardless of how many frames came before. The
count is decayed by gamma and capped at count_cap whenever a cell receives
new points, which keeps the map responsive to fresh observations. Height and
extrema statistics use separate sample weights: heights are weighted by the
point count, extrema by the number of frames that observed the cell (each
frame contributes exactly one max/min sample).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import AlignmentError, DataError
from .validation import check_points, check_positive

# Nudge applied before flooring world->cell coordinates so positions that are
# exact multiples of the resolution land in the cell they name.
_SNAP = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Square cell grid, axis-aligned, origin snapped to the resolution.

    The origin is stored in integer cell units so that repeated recentering
    never accumulates floating-point drift.
    """

    cells: int
    resolution: float
    ox_cells: int = 0
    oy_cells: int = 0

    def __post_init__(self):
        if int(self.cells) < 1:
            raise DataError(f"grid needs at least one cell, got {self.cells}")
        check_positive(self.resolution, "resolution")

    @classmethod
    def from_origin(cls, cells: int, resolution: float, origin=(0.0, 0.0)) -> "GridSpec":
        ox = int(round(float(origin[0]) / resolution))
        oy = int(round(float(origin[1]) / resolution))
        return cls(cells=cells, resolution=resolution, ox_cells=ox, oy_cells=oy)

    @property
    def origin(self) -> tuple[float, float]:
        return (self.ox_cells * self.resolution, self.oy_cells * self.resolution)

    @property
    def extent(self) -> float:
        return self.cells * self.resolution

    def shape(self) -> tuple[int, int]:
        return (self.cells, self.cells)


@dataclass
class FrameFeatures:
    """Single-frame per-cell aggregates: count, sum z, sum z^2, max z, min z.

    Cells that received no points hold zeros in every channel.
    """

    grid: GridSpec
    count: np.ndarray
    sum_z: np.ndarray
    sum_zz: np.ndarray
    z_max: np.ndarray
    z_min: np.ndarray


@dataclass
class PointFeatureMap:
    """Maintained per-cell statistics (single-writer; copy via snapshot()).

    frames counts how many frames contributed points to each cell, decayed
    symmetrically with the point count; it is bookkeeping for the extrema
    statistics and the observation rate, not a network channel.
    """

    grid: GridSpec
    count: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    max_mean: np.ndarray
    max_var: np.ndarray
    min_mean: np.ndarray
    min_var: np.ndarray
    frames: np.ndarray
    decay: float = 0.90
    count_cap: float = 100.0

    @classmethod
    def zero(cls, grid: GridSpec, decay: float = 0.90, count_cap: float = 100.0) -> "PointFeatureMap":
        if not 0.0 <= decay <= 1.0:
            raise DataError(f"decay must be in [0, 1], got {decay}")
        if not count_cap > 0:
            raise DataError(f"count_cap must be > 0, got {count_cap}")
        z = lambda: np.zeros(grid.shape(), dtype=np.float64)
        return cls(grid, z(), z(), z(), z(), z(), z(), z(), z(), float(decay), float(count_cap))

    def snapshot(self) -> "PointFeatureMap":
        """Deep copy safe to hand to other threads while updates continue."""
        return replace(
            self,
            count=self.count.copy(),
            mean=self.mean.copy(),
            var=self.var.copy(),
            max_mean=self.max_mean.copy(),
            max_var=self.max_var.copy(),
            min_mean=self.min_mean.copy(),
            min_var=self.min_var.copy(),
            frames=self.frames.copy(),
        )

    @property
    def observed(self) -> np.ndarray:
        """Cells that have ever received at least one point (bool grid)."""
        return self.frames >= 1.0


@dataclass(frozen=True)
class Normalization:
    """Metadata that makes the exported tensor invertible.

    Heights are exported relative to height_reference (typically the ground
    elevation under the sensor: sensor z minus the mount height); the count
    channel is divided by count_scale.
    """

    height_reference: float = 0.0
    count_scale: float = 100.0


@dataclass
class FeatureTensor:
    """7 x H x W float32 network input plus the metadata to invert it.

    Channel order: count, E(Z), Var(Z), E(Zmax), Var(Zmax), E(Zmin), Var(Zmin).
    """

    data: np.ndarray
    norm: Normalization


def cell_indices(grid: GridSpec, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(ix, iy, inside) for world xy coordinates; indices valid where inside."""
    fx = xy[:, 0] / grid.resolution - grid.ox_cells + _SNAP
    fy = xy[:, 1] / grid.resolution - grid.oy_cells + _SNAP
    inside = (fx >= 0) & (fx < grid.cells) & (fy >= 0) & (fy < grid.cells)
    ix = fx.astype(np.intp)
    iy = fy.astype(np.intp)
    return ix, iy, inside


def rasterize(points, grid: GridSpec) -> FrameFeatures:
    """One-pass per-cell aggregation of a point cloud.

    Points outside the grid are dropped; empty cells are all-zero.
    Accepts an (N, 3) array or any object with a `.points` attribute.
    """
    pts = check_points(getattr(points, "points", points))
    n = grid.cells
    shape = (n, n)
    if pts.shape[0] == 0:
        z = lambda: np.zeros(shape, dtype=np.float64)
        return FrameFeatures(grid, np.zeros(shape, dtype=np.int64), z(), z(), z(), z())

    ix, iy, inside = cell_indices(grid, pts[:, :2])
    flat = iy[inside] * n + ix[inside]
    z = pts[inside, 2]

    size = n * n
    count = np.bincount(flat, minlength=size)
    sum_z = np.bincount(flat, weights=z, minlength=size)
    sum_zz = np.bincount(flat, weights=z * z, minlength=size)
    z_max = np.full(size, -np.inf)
    z_min = np.full(size, np.inf)
    np.maximum.at(z_max, flat, z)
    np.minimum.at(z_min, flat, z)
    empty = count == 0
    z_max[empty] = 0.0
    z_min[empty] = 0.0
    return FrameFeatures(
        grid,
        count.reshape(shape),
        sum_z.reshape(shape),
        sum_zz.reshape(shape),
        z_max.reshape(shape),
        z_min.reshape(shape),
    )


def _check_aligned(pfm: PointFeatureMap, frame: FrameFeatures):
    if frame.grid != pfm.grid:
        raise AlignmentError(f"frame grid {frame.grid} does not match map grid {pfm.grid}")


def decay_counts(pfm: PointFeatureMap, frame: FrameFeatures) -> PointFeatureMap:
    """Apply the decayed-count update to cells that received new points.

    For cells with c > 0: C <- min(count_cap, decay * C + c), and the frame
    count F <- min(count_cap, decay * F + 1). Cells with c = 0 are untouched.
    """
    _check_aligned(pfm, frame)
    new = frame.count > 0
    c = frame.count.astype(np.float64)
    pfm.count = np.where(new, np.minimum(pfm.count_cap, pfm.decay * pfm.count + c), pfm.count)
    pfm.frames = np.where(new, np.minimum(pfm.count_cap, pfm.decay * pfm.frames + 1.0), pfm.frames)
    return pfm


def _fold(weight0, mean0, var0, add_sum, add_sumsq, add_weight):
    """Weighted mean/population-variance update via E(z^2) = Var + E^2."""
    total = weight0 + add_weight
    denom = np.where(total > 0, total, 1.0)
    sumsq = weight0 * (var0 + mean0 * mean0) + add_sumsq
    mean_new = (weight0 * mean0 + add_sum) / denom
    var_new = sumsq / denom - mean_new * mean_new
    return total, mean_new, var_new


def integrate(pfm: PointFeatureMap, frame: FrameFeatures) -> PointFeatureMap:
    """Fold one frame of aggregates into the maintained map, in place.

    Per cell with new points: the counts are decayed first, then the height
    mean/variance absorb (sum z, sum z^2) with point-count weights and the
    extrema statistics absorb the frame max/min as one sample with
    frame-count weight. Cells without new points are untouched. With decay
    disabled (decay=1, count_cap=inf) the result equals batch statistics
    over all points ever inserted.
    """
    _check_aligned(pfm, frame)
    new = frame.count > 0
    if not new.any():
        return pfm
    c = frame.count.astype(np.float64)

    c0 = pfm.decay * pfm.count
    f0 = pfm.decay * pfm.frames
    c_total, mean_new, var_new = _fold(c0, pfm.mean, pfm.var, frame.sum_z, frame.sum_zz, c)
    _, maxm_new, maxv_new = _fold(
        f0, pfm.max_mean, pfm.max_var, frame.z_max, frame.z_max * frame.z_max, 1.0
    )
    _, minm_new, minv_new = _fold(
        f0, pfm.min_mean, pfm.min_var, frame.z_min, frame.z_min * frame.z_min, 1.0
    )

    pfm.mean = np.where(new, mean_new, pfm.mean)
    pfm.var = np.where(new, var_new, pfm.var)
    pfm.max_mean = np.where(new, maxm_new, pfm.max_mean)
    pfm.max_var = np.where(new, maxv_new, pfm.max_var)
    pfm.min_mean = np.where(new, minm_new, pfm.min_mean)
    pfm.min_var = np.where(new, minv_new, pfm.min_var)
    pfm.count = np.where(new, np.minimum(pfm.count_cap, c_total), pfm.count)
    pfm.frames = np.where(new, np.minimum(pfm.count_cap, f0 + 1.0), pfm.frames)
    return pfm


def _shift2d(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate so out[r, c] = a[r + dy, c + dx]; vacated cells are zero."""
    h, w = a.shape
    out = np.zeros_like(a)
    src_r = slice(max(0, dy), min(h, h + dy))
    dst_r = slice(max(0, -dy), max(0, -dy) + (src_r.stop - src_r.start))
    src_c = slice(max(0, dx), min(w, w + dx))
    dst_c = slice(max(0, -dx), max(0, -dx) + (src_c.stop - src_c.start))
    if src_r.stop > src_r.start and src_c.stop > src_c.start:
        out[dst_r, dst_c] = a[src_r, src_c]
    return out


def recenter(pfm: PointFeatureMap, body_xy) -> PointFeatureMap:
    """Translate the grid window so the body position stays in the center cell.

    The shift is a whole number of cells: surviving cell contents move
    verbatim, newly exposed cells start zeroed, and departing cells are
    discarded. Displacements smaller than one cell leave the map unchanged.
    """
    g = pfm.grid
    half = g.cells // 2
    nox = math.floor(float(body_xy[0]) / g.resolution + _SNAP) - half
    noy = math.floor(float(body_xy[1]) / g.resolution + _SNAP) - half
    dx = nox - g.ox_cells
    dy = noy - g.oy_cells
    if dx == 0 and dy == 0:
        return pfm
    for name in ("count", "mean", "var", "max_mean", "max_var", "min_mean", "min_var", "frames"):
        setattr(pfm, name, _shift2d(getattr(pfm, name), dy, dx))
    pfm.grid = GridSpec(g.cells, g.resolution, nox, noy)
    return pfm


def observation_rate(pfm: PointFeatureMap, region: tuple[int, int, int, int] | None = None) -> float:
    """Fraction of cells in the region observed at least once.

    region is (row0, row1, col0, col1), half-open; None means the full grid.
    """
    n = pfm.grid.cells
    r0, r1, c0, c1 = region if region is not None else (0, n, 0, n)
    if not (0 <= r0 < r1 <= n and 0 <= c0 < c1 <= n):
        raise DataError(f"region {region} is empty or outside the {n}x{n} grid")
    window = pfm.frames[r0:r1, c0:c1]
    return float(np.count_nonzero(window >= 1.0)) / window.size


def to_network_input(pfm: PointFeatureMap, norm: Normalization | None = None) -> FeatureTensor:
    """Export the 7-channel float32 tensor the reconstruction model consumes.

    The count channel is divided by count_scale (defaults to the map's
    count_cap); the three height means are shifted to be relative to
    height_reference on observed cells; variances are clamped at zero and
    passed through. Unobserved cells stay all-zero. Inverted exactly (to
    float32 precision) by denormalize().
    """
    if norm is None:
        scale = pfm.count_cap if math.isfinite(pfm.count_cap) else 1.0
        norm = Normalization(height_reference=0.0, count_scale=scale)
    if not (math.isfinite(norm.count_scale) and norm.count_scale > 0):
        raise DataError(f"count_scale must be finite and > 0, got {norm.count_scale}")
    for name in ("count", "mean", "var", "max_mean", "max_var", "min_mean", "min_var"):
        if not np.all(np.isfinite(getattr(pfm, name))):
            raise DataError(f"map channel {name} contains non-finite cells")

    obs = pfm.count > 0
    ref = norm.height_reference
    t = np.zeros((7,) + pfm.grid.shape(), dtype=np.float32)
    t[0] = pfm.count / norm.count_scale
    t[1] = np.where(obs, pfm.mean - ref, 0.0)
    t[2] = np.maximum(pfm.var, 0.0)
    t[3] = np.where(obs, pfm.max_mean - ref, 0.0)
    t[4] = np.maximum(pfm.max_var, 0.0)
    t[5] = np.where(obs, pfm.min_mean - ref, 0.0)
    t[6] = np.maximum(pfm.min_var, 0.0)
    return FeatureTensor(data=t, norm=norm)


def denormalize(tensor: FeatureTensor) -> np.ndarray:
    """Invert to_network_input: absolute heights and raw counts, float64.

    Returns a (7, H, W) array in the maintained-map channel order; cells
    with zero count are zero everywhere, matching the map convention.
    """
    t = np.asarray(tensor.data, dtype=np.float64)
    obs = t[0] > 0
    out = t.copy()
    out[0] = t[0] * tensor.norm.count_scale
    for ch in (1, 3, 5):
        out[ch] = np.where(obs, t[ch] + tensor.norm.height_reference, 0.0)
    return out
