"""Procedural urban terrain heightfields with stairs, slopes, corridors and obstacles.

Generation stamps feature primitives onto a flat base grid in a fixed family
order; later stamps overwrite earlier ones ("last stamp wins"), which keeps
composition deterministic for a given seed. All rectangular features are
axis-aligned in one of four cardinal orientations so stair treads stay
exactly flat at cell granularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from skimage.draw import polygon as _draw_polygon
from skimage.filters import apply_hysteresis_threshold

from .exceptions import BoundaryError, DataError, PlacementError
from .geometry import Pose
from .validation import check_positive, check_range


@dataclass(frozen=True)
class HeightField:
    """Dense ground-truth terrain heightmap.

    heights[iy, ix] is the surface height (meters) of the cell whose center
    sits at (origin + (ix + 0.5, iy + 0.5) * resolution).
    """

    heights: np.ndarray
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
            raise DataError(f"heights must be a non-empty 2D grid, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise DataError("heights contain non-finite values")
        check_positive(self.resolution, "resolution")
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height_cells(self) -> int:
        return self.heights.shape[0]

    @property
    def width_cells(self) -> int:
        return self.heights.shape[1]

    @property
    def extent(self) -> tuple[float, float]:
        return (self.width_cells * self.resolution, self.height_cells * self.resolution)

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        """(iy, ix) of the cell containing the world point, or BoundaryError."""
        ix = math.floor((x - self.origin[0]) / self.resolution)
        iy = math.floor((y - self.origin[1]) / self.resolution)
        if not (0 <= ix < self.width_cells and 0 <= iy < self.height_cells):
            raise BoundaryError(
                f"point ({x:.3f}, {y:.3f}) outside field extent "
                f"{self.extent[0]:.2f}m x {self.extent[1]:.2f}m"
            )
        return iy, ix

    def height_at(self, x: float, y: float) -> float:
        iy, ix = self.cell_index(x, y)
        return float(self.heights[iy, ix])


@dataclass(frozen=True)
class TerrainSpec:
    """Feature mix and parameter ranges for procedural terrain generation.

    Counts request how many instances of each family to place; parameter
    ranges are sampled uniformly, and a degenerate (v, v) range pins the
    value. Heights are clipped at max_height after stamping.
    """

    extent: tuple[float, float] = (20.0, 20.0)
    resolution: float = 0.04
    flat_regions: int = 2
    staircases: int = 3
    slopes: int = 2
    corridors: int = 2
    obstacles: int = 12
    stair_rise: tuple[float, float] = (0.12, 0.20)
    stair_run: tuple[float, float] = (0.24, 0.36)
    stair_steps: tuple[int, int] = (4, 8)
    stair_width: tuple[float, float] = (1.5, 3.0)
    slope_grade: tuple[float, float] = (0.15, 0.45)
    slope_length: tuple[float, float] = (2.0, 4.0)
    obstacle_height: tuple[float, float] = (0.4, 1.8)
    obstacle_radius: tuple[float, float] = (0.3, 1.2)
    corridor_width: tuple[float, float] = (1.0, 2.0)
    flat_size: tuple[float, float] = (3.0, 6.0)
    max_height: float = 3.0
    seed: int = 0

    def __post_init__(self):
        check_positive(self.extent[0], "extent x")
        check_positive(self.extent[1], "extent y")
        check_positive(self.resolution, "resolution")
        for name in (
            "stair_rise",
            "stair_run",
            "stair_width",
            "slope_grade",
            "slope_length",
            "obstacle_height",
            "obstacle_radius",
            "corridor_width",
            "flat_size",
        ):
            check_range(getattr(self, name), name)
        if self.stair_rise[0] <= 0:
            raise DataError("stair rise must be > 0")
        lo, hi = self.stair_steps
        if int(lo) < 1 or int(hi) < int(lo):
            raise DataError(f"stair_steps must be a range of positive counts, got {self.stair_steps}")
        for name in ("flat_regions", "staircases", "slopes", "corridors", "obstacles"):
            if int(getattr(self, name)) < 0:
                raise DataError(f"{name} count must be >= 0")


@dataclass(frozen=True)
class RobotConfig:
    """Quadruped footprint geometry and the LiDAR mount above the body origin."""

    foot_offsets: tuple = (
        (0.21, 0.14),
        (0.21, -0.14),
        (-0.21, 0.14),
        (-0.21, -0.14),
    )
    mount_height: float = 0.50
    clearance: float = 0.0


@dataclass(frozen=True)
class EdgeParams:
    """Edge detector settings: Gaussian smoothing plus gradient hysteresis.

    Thresholds are fractions of the maximum gradient magnitude, so the
    detector is invariant to scaling or offsetting the height patch.
    """

    sigma: float = 1.0
    low: float = 0.10
    high: float = 0.20


_SPEC_INT_KEYS = {"flat_regions", "staircases", "slopes", "corridors", "obstacles", "seed"}
_SPEC_RANGE_KEYS = {
    "stair_rise",
    "stair_run",
    "stair_width",
    "slope_grade",
    "slope_length",
    "obstacle_height",
    "obstacle_radius",
    "corridor_width",
    "flat_size",
    "extent",
    "stair_steps",
}


def parse_terrain_spec(text: str) -> TerrainSpec:
    """Parse the plain-text key/value terrain config format.

    One `key = value` pair per line; ranges take two whitespace-separated
    numbers; `#` starts a comment. Unknown keys are rejected.
    """
    kwargs = {}
    valid = set(TerrainSpec.__dataclass_fields__)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"terrain spec line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if key not in valid:
            raise DataError(f"terrain spec line {lineno}: unknown key {key!r}")
        parts = value.split()
        try:
            if key in _SPEC_RANGE_KEYS:
                if len(parts) == 1:
                    parts = parts * 2
                if key == "stair_steps":
                    kwargs[key] = (int(parts[0]), int(parts[1]))
                else:
                    kwargs[key] = (float(parts[0]), float(parts[1]))
            elif key in _SPEC_INT_KEYS:
                kwargs[key] = int(parts[0])
            else:
                kwargs[key] = float(parts[0])
        except (ValueError, IndexError) as exc:
            raise DataError(f"terrain spec line {lineno}: bad value {value!r} for {key!r}") from exc
    return TerrainSpec(**kwargs)


def load_terrain_spec(path) -> TerrainSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_terrain_spec(fh.read())


def _uniform(rng, lo, hi):
    return lo if lo == hi else rng.uniform(lo, hi)


def _place_box(rng, spec: TerrainSpec, size_x: float, size_y: float, family: str):
    """Pick a random cell-aligned corner so a size_x x size_y box fits inside the extent."""
    res = spec.resolution
    nx = max(1, int(round(size_x / res)))
    ny = max(1, int(round(size_y / res)))
    wx = int(round(spec.extent[0] / res))
    wy = int(round(spec.extent[1] / res))
    if nx > wx or ny > wy:
        raise PlacementError(
            f"{family} footprint {nx * res:.2f}m x {ny * res:.2f}m does not fit "
            f"inside terrain extent {spec.extent[0]:.2f}m x {spec.extent[1]:.2f}m"
        )
    cx = int(rng.integers(0, wx - nx + 1))
    cy = int(rng.integers(0, wy - ny + 1))
    return cy, cx, ny, nx


def _stamp(heights: np.ndarray, block: np.ndarray, cy: int, cx: int):
    heights[cy : cy + block.shape[0], cx : cx + block.shape[1]] = block


def _stair_block(rng, spec: TerrainSpec, res: float) -> np.ndarray:
    rise = _uniform(rng, *spec.stair_rise)
    run = _uniform(rng, *spec.stair_run)
    steps = int(rng.integers(spec.stair_steps[0], spec.stair_steps[1] + 1))
    width = _uniform(rng, *spec.stair_width)
    run_cells = max(1, int(round(run / res)))
    w_cells = max(1, int(round(width / res)))
    block = np.repeat(np.arange(1, steps + 1, dtype=np.float64) * rise, run_cells)
    return np.tile(block[:, None], (1, w_cells))


def _slope_block(rng, spec: TerrainSpec, res: float) -> np.ndarray:
    grade = _uniform(rng, *spec.slope_grade)
    length = _uniform(rng, *spec.slope_length)
    width = _uniform(rng, *spec.stair_width)
    n = max(2, int(round(length / res)))
    w_cells = max(1, int(round(width / res)))
    ramp = (np.arange(n, dtype=np.float64) + 0.5) * res * grade
    return np.tile(ramp[:, None], (1, w_cells))


def _corridor_block(rng, spec: TerrainSpec, res: float) -> np.ndarray:
    passage = _uniform(rng, *spec.corridor_width)
    wall_h = _uniform(rng, *spec.obstacle_height)
    length = _uniform(rng, *spec.flat_size)
    wall_cells = max(1, int(round(0.3 / res)))
    p_cells = max(1, int(round(passage / res)))
    n = max(1, int(round(length / res)))
    block = np.zeros((n, p_cells + 2 * wall_cells), dtype=np.float64)
    block[:, :wall_cells] = wall_h
    block[:, -wall_cells:] = wall_h
    return block


def _stamp_obstacle(rng, spec: TerrainSpec, heights: np.ndarray):
    """Irregular convex-ish polygon prism at a random height."""
    res = spec.resolution
    radius = _uniform(rng, *spec.obstacle_radius)
    height = _uniform(rng, *spec.obstacle_height)
    n_vert = int(rng.integers(5, 10))
    margin = radius + res
    if 2 * margin >= min(spec.extent):
        raise PlacementError(
            f"obstacle of radius {radius:.2f}m does not fit inside terrain extent "
            f"{spec.extent[0]:.2f}m x {spec.extent[1]:.2f}m"
        )
    cx = rng.uniform(margin, spec.extent[0] - margin)
    cy = rng.uniform(margin, spec.extent[1] - margin)
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, n_vert))
    radii = rng.uniform(0.4 * radius, radius, n_vert)
    vx = (cx + radii * np.cos(angles)) / res
    vy = (cy + radii * np.sin(angles)) / res
    rr, cc = _draw_polygon(vy, vx, shape=heights.shape)
    heights[rr, cc] = height


def generate_terrain(spec: TerrainSpec) -> HeightField:
    """Generate a heightfield containing every requested feature family.

    Deterministic for a given spec (the seed drives a private generator).
    Raises PlacementError naming the family when the extent is too small.
    """
    rng = np.random.default_rng(spec.seed)
    res = spec.resolution
    wx = int(round(spec.extent[0] / res))
    wy = int(round(spec.extent[1] / res))
    if wx < 1 or wy < 1:
        raise PlacementError("terrain extent smaller than one cell")
    heights = np.zeros((wy, wx), dtype=np.float64)

    for _ in range(int(spec.flat_regions)):
        sx = _uniform(rng, *spec.flat_size)
        sy = _uniform(rng, *spec.flat_size)
        cy, cx, ny, nx = _place_box(rng, spec, sx, sy, "flat region")
        _stamp(heights, np.zeros((ny, nx)), cy, cx)

    for _ in range(int(spec.slopes)):
        block = _slope_block(rng, spec, res)
        block = np.rot90(block, k=int(rng.integers(4)))
        cy, cx, _, _ = _place_box(rng, spec, block.shape[1] * res, block.shape[0] * res, "slope")
        _stamp(heights, block, cy, cx)

    for _ in range(int(spec.corridors)):
        block = _corridor_block(rng, spec, res)
        block = np.rot90(block, k=int(rng.integers(4)))
        cy, cx, _, _ = _place_box(rng, spec, block.shape[1] * res, block.shape[0] * res, "corridor")
        _stamp(heights, block, cy, cx)

    for _ in range(int(spec.staircases)):
        block = _stair_block(rng, spec, res)
        block = np.rot90(block, k=int(rng.integers(4)))
        cy, cx, _, _ = _place_box(rng, spec, block.shape[1] * res, block.shape[0] * res, "staircase")
        _stamp(heights, block, cy, cx)

    for _ in range(int(spec.obstacles)):
        _stamp_obstacle(rng, spec, heights)

    np.minimum(heights, spec.max_height, out=heights)
    return HeightField(heights=heights, resolution=res, origin=(0.0, 0.0))


def extract_patch(field: HeightField, center, size: float, resolution: float | None = None) -> np.ndarray:
    """Square patch of round(size/resolution) cells per side, centered at `center`.

    Cells are sampled by nearest-cell lookup from the field; the whole
    footprint must lie inside the field bounds.
    """
    res = field.resolution if resolution is None else float(resolution)
    check_positive(res, "resolution")
    n = int(round(size / res))
    if n < 1:
        raise DataError(f"patch size {size} too small for resolution {res}")
    cx, cy = float(center[0]), float(center[1])
    xs = cx - size / 2.0 + (np.arange(n) + 0.5) * res
    ys = cy - size / 2.0 + (np.arange(n) + 0.5) * res
    ix = np.floor((xs - field.origin[0]) / field.resolution).astype(np.intp)
    iy = np.floor((ys - field.origin[1]) / field.resolution).astype(np.intp)
    if ix.min() < 0 or iy.min() < 0 or ix.max() >= field.width_cells or iy.max() >= field.height_cells:
        raise BoundaryError(
            f"patch of {size:.2f}m at ({cx:.2f}, {cy:.2f}) extends outside the field"
        )
    return field.heights[np.ix_(iy, ix)].copy()


def edge_map(patch: np.ndarray, params: EdgeParams | None = None) -> np.ndarray:
    """Binary edge map of a height patch.

    Heights are normalized by the patch dynamic range, smoothed with a
    Gaussian, and thresholded on gradient magnitude with hysteresis. A
    constant patch has no edges. Adding a constant offset to the patch does
    not change the result.
    """
    params = params or EdgeParams()
    p = np.asarray(patch, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise DataError("patch contains non-finite heights")
    span = float(p.max() - p.min()) if p.size else 0.0
    if span == 0.0:
        return np.zeros(p.shape, dtype=np.uint8)
    norm = (p - p.min()) / span
    smooth = gaussian_filter(norm, params.sigma, mode="nearest")
    gy, gx = np.gradient(smooth)
    mag = np.hypot(gx, gy)
    peak = float(mag.max())
    if peak == 0.0:
        return np.zeros(p.shape, dtype=np.uint8)
    edges = apply_hysteresis_threshold(mag, params.low * peak, params.high * peak)
    return edges.astype(np.uint8)


def footprint_pose(field: HeightField, position, heading: float, robot: RobotConfig | None = None) -> Pose:
    """Sensor pose for a robot standing at `position` with the given heading.

    Body height is the mean terrain height under the four feet plus the
    clearance; pitch and roll come from a least-squares plane over the foot
    heights; the sensor sits mount_height above the body origin.
    """
    robot = robot or RobotConfig()
    px, py = float(position[0]), float(position[1])
    ch, sh = math.cos(heading), math.sin(heading)
    offsets = np.asarray(robot.foot_offsets, dtype=np.float64)
    feet_x = px + offsets[:, 0] * ch - offsets[:, 1] * sh
    feet_y = py + offsets[:, 0] * sh + offsets[:, 1] * ch

    # Fit against the sampled cells' center coordinates, not the raw foot
    # positions: heights belong to cell centers, and mixing frames would
    # tilt the fit on perfectly planar terrain.
    sx, sy, hts = [], [], []
    for x, y in zip(feet_x, feet_y):
        iy, ix = field.cell_index(x, y)
        sx.append(field.origin[0] + (ix + 0.5) * field.resolution)
        sy.append(field.origin[1] + (iy + 0.5) * field.resolution)
        hts.append(field.heights[iy, ix])
    sx, sy, hts = np.array(sx), np.array(sy), np.array(hts)

    a_mat = np.column_stack([sx, sy, np.ones_like(sx)])
    (a, b, _), *_ = np.linalg.lstsq(a_mat, hts, rcond=None)

    s_along = a * ch + b * sh
    s_across = -a * sh + b * ch
    pitch = math.atan(s_along)
    roll = math.asin(s_across / math.sqrt(1.0 + s_along**2 + s_across**2))
    body_z = float(hts.mean()) + robot.clearance
    return Pose(x=px, y=py, z=body_z + robot.mount_height, roll=roll, pitch=pitch, yaw=heading)
