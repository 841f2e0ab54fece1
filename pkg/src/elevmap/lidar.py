"""Spinning multi-channel LiDAR simulation over a heightfield.

Rays are marched in world space against the terrain surface and refined by
bisection; hits are snapped onto the surface so that, with noise and
odometry perturbation disabled, every returned point lies exactly on the
terrain. Clouds are expressed in the odometry frame through the *reported*
(perturbed) sensor pose, so odometry error displaces the cloud the same way
it does on a real robot. Per-point noise is added to the final coordinates,
which keeps the configured bound exact per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import BoundaryError, DataError
from .geometry import Pose, rotation_matrix
from .terrain import HeightField, RobotConfig, footprint_pose
from .validation import check_positive, check_range


@dataclass(frozen=True)
class LidarModel:
    """Spinning LiDAR geometry: 16 channels over +/-15 deg by default."""

    channels: int = 16
    vertical_fov: tuple[float, float] = (-math.radians(15.0), math.radians(15.0))
    azimuth_step: float = math.radians(0.4)
    max_range: float = 30.0
    rate: float = 10.0
    point_noise: float = 0.02
    refine_iters: int = 10

    def __post_init__(self):
        if int(self.channels) < 1:
            raise DataError(f"need at least one channel, got {self.channels}")
        check_positive(self.max_range, "max_range")
        check_positive(self.azimuth_step, "azimuth_step")
        check_positive(self.rate, "rate")
        if self.point_noise < 0:
            raise DataError("point_noise must be >= 0")

    @property
    def azimuth_count(self) -> int:
        return int(math.ceil(2.0 * math.pi / self.azimuth_step - 1e-9))

    def ray_directions(self) -> np.ndarray:
        """Unit ray directions in the sensor frame, shape (channels * azimuths, 3)."""
        els = np.linspace(self.vertical_fov[0], self.vertical_fov[1], self.channels)
        azs = np.arange(self.azimuth_count) * self.azimuth_step
        ce, se = np.cos(els), np.sin(els)
        ca, sa = np.cos(azs), np.sin(azs)
        dirs = np.empty((self.channels, self.azimuth_count, 3), dtype=np.float64)
        dirs[:, :, 0] = ce[:, None] * ca[None, :]
        dirs[:, :, 1] = ce[:, None] * sa[None, :]
        dirs[:, :, 2] = se[:, None]
        return dirs.reshape(-1, 3)


@dataclass(frozen=True)
class OdometryNoise:
    """Per-axis bounds of the reported-pose error (meters / radians)."""

    translation: float = 0.02
    rotation: float = 0.04
    mode: str = "iid"  # "iid": fresh offsets each step; "walk": bounded random walk

    def __post_init__(self):
        if self.translation < 0 or self.rotation < 0:
            raise DataError("odometry noise bounds must be >= 0")
        if self.mode not in ("iid", "walk"):
            raise DataError(f"odometry mode must be 'iid' or 'walk', got {self.mode!r}")


@dataclass(frozen=True)
class TrajectoryConfig:
    """Closed-loop trajectory around a center point with random forward speed."""

    center: tuple[float, float] = (10.0, 10.0)
    radius: float = 4.0
    speed_range: tuple[float, float] = (0.0, 1.0)
    vibration: float = 0.01
    odometry: OdometryNoise = OdometryNoise()

    def __post_init__(self):
        check_positive(self.radius, "radius")
        lo, hi = check_range(self.speed_range, "speed_range")
        if lo < 0:
            raise DataError("speeds must be >= 0")
        if self.vibration < 0:
            raise DataError("vibration must be >= 0")

    def position(self, s: float) -> tuple[float, float]:
        a = s / self.radius
        return (
            self.center[0] + self.radius * math.cos(a),
            self.center[1] + self.radius * math.sin(a),
        )

    def heading(self, s: float) -> float:
        return s / self.radius + math.pi / 2.0


@dataclass
class PointCloud:
    """One LiDAR frame in the odometry frame."""

    points: np.ndarray
    stamp: float
    reported_pose: Pose


@dataclass
class TrajectoryState:
    """Mutable trajectory bookkeeping: true vs reported pose plus the RNG."""

    field: HeightField
    config: TrajectoryConfig
    robot: RobotConfig
    rng: np.random.Generator
    path_s: float = 0.0
    time: float = 0.0
    true_pose: Pose = Pose()
    reported_pose: Pose = Pose()
    odo_offset: np.ndarray | None = None


def init_trajectory(
    field: HeightField,
    config: TrajectoryConfig | None = None,
    robot: RobotConfig | None = None,
    seed: int = 0,
) -> TrajectoryState:
    config = config or TrajectoryConfig(
        center=(field.extent[0] / 2.0, field.extent[1] / 2.0)
    )
    robot = robot or RobotConfig()
    state = TrajectoryState(
        field=field,
        config=config,
        robot=robot,
        rng=np.random.default_rng(seed),
        odo_offset=np.zeros(6),
    )
    pose = footprint_pose(field, config.position(0.0), config.heading(0.0), robot)
    state.true_pose = pose
    state.reported_pose = perturb_odometry(pose, state.rng, config.odometry)
    return state


def perturb_odometry(true_pose: Pose, rng: np.random.Generator, noise: OdometryNoise | None = None) -> Pose:
    """Reported pose: i.i.d. uniform offsets per translation and Euler axis."""
    noise = noise or OdometryNoise()
    dt = rng.uniform(-noise.translation, noise.translation, 3) if noise.translation > 0 else np.zeros(3)
    dr = rng.uniform(-noise.rotation, noise.rotation, 3) if noise.rotation > 0 else np.zeros(3)
    return Pose(
        x=true_pose.x + dt[0],
        y=true_pose.y + dt[1],
        z=true_pose.z + dt[2],
        roll=true_pose.roll + dr[0],
        pitch=true_pose.pitch + dr[1],
        yaw=true_pose.yaw + dr[2],
    )


def _walk_offset(state: TrajectoryState) -> Pose:
    """Bounded random-walk odometry error (alternative to i.i.d. mode)."""
    noise = state.config.odometry
    bounds = np.array([noise.translation] * 3 + [noise.rotation] * 3)
    step = state.rng.uniform(-bounds / 10.0, bounds / 10.0)
    state.odo_offset = np.clip(state.odo_offset + step, -bounds, bounds)
    return Pose.from_array(state.true_pose.as_array() + state.odo_offset)


def advance_trajectory(state: TrajectoryState, dt: float) -> TrajectoryState:
    """Move along the loop by v*dt with v ~ Uniform(speed_range); update poses.

    The true pose follows the terrain through the footprint model plus a
    small random roll/pitch vibration; the reported pose adds the odometry
    perturbation. Raises BoundaryError if a foot leaves the field.
    """
    if not dt > 0:
        raise DataError(f"dt must be > 0, got {dt}")
    cfg = state.config
    lo, hi = cfg.speed_range
    v = lo if lo == hi else state.rng.uniform(lo, hi)
    s = state.path_s + v * dt
    pose = footprint_pose(state.field, cfg.position(s), cfg.heading(s), state.robot)
    if cfg.vibration > 0:
        vib = state.rng.uniform(-cfg.vibration, cfg.vibration, 2)
        pose = replace(pose, roll=pose.roll + vib[0], pitch=pose.pitch + vib[1])
    state.path_s = s
    state.time += dt
    state.true_pose = pose
    if cfg.odometry.mode == "walk":
        state.reported_pose = _walk_offset(state)
    else:
        state.reported_pose = perturb_odometry(pose, state.rng, cfg.odometry)
    return state


def _heights_at(field: HeightField, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    res = field.resolution
    ix = ((x - field.origin[0]) / res).astype(np.intp)
    iy = ((y - field.origin[1]) / res).astype(np.intp)
    return field.heights[iy, ix]


def scan(
    field: HeightField,
    state: TrajectoryState,
    model: LidarModel | None = None,
    rng: np.random.Generator | None = None,
) -> PointCloud:
    """Simulate one sweep: one ray per (channel, azimuth step) from the true pose.

    Intersections are found by marching at half the field resolution and
    refined with bisection, then snapped onto the terrain surface. Rays that
    leave the field or exceed max range return nothing. Each hit gets i.i.d.
    uniform noise per coordinate, and the cloud is expressed in the odometry
    frame via the reported pose.
    """
    model = model or LidarModel()
    rng = rng if rng is not None else state.rng
    origin = state.true_pose.translation()
    if origin[2] <= field.height_at(origin[0], origin[1]):
        raise BoundaryError("sensor pose is not above the terrain surface")

    rot = rotation_matrix(state.true_pose)
    dirs = model.ray_directions() @ rot.T
    n_rays = dirs.shape[0]

    step = field.resolution / 2.0
    hmax = float(field.heights.max())
    xmin, ymin = field.origin
    xmax = xmin + field.extent[0]
    ymax = ymin + field.extent[1]

    # Rays that start above the highest cell and never descend cannot hit.
    alive = ~((dirs[:, 2] >= 0.0) & (origin[2] > hmax))
    d = dirs[alive]
    ray_ids = np.flatnonzero(alive)
    t = np.full(d.shape[0], step)
    heights = field.heights
    inv_res = 1.0 / field.resolution
    hit_lo = []
    hit_hi = []
    hit_dir = []
    while t.size:
        p = origin[None, :] + t[:, None] * d
        inside = (
            (p[:, 0] >= xmin)
            & (p[:, 0] < xmax)
            & (p[:, 1] >= ymin)
            & (p[:, 1] < ymax)
            & (t <= model.max_range)
        )
        d, t, p, ray_ids = d[inside], t[inside], p[inside], ray_ids[inside]
        if not t.size:
            break
        ix = ((p[:, 0] - xmin) * inv_res).astype(np.intp)
        iy = ((p[:, 1] - ymin) * inv_res).astype(np.intp)
        below = p[:, 2] <= heights[iy, ix]
        if below.any():
            hit_lo.append(t[below] - step)
            hit_hi.append(t[below])
            hit_dir.append(ray_ids[below])
            keep = ~below
            d, t, ray_ids = d[keep], t[keep], ray_ids[keep]
        t = t + step

    if hit_dir:
        d = dirs[np.concatenate(hit_dir)]
        lo = np.concatenate(hit_lo)
        hi = np.concatenate(hit_hi)
        for _ in range(model.refine_iters):
            mid = 0.5 * (lo + hi)
            p = origin[None, :] + mid[:, None] * d
            below = p[:, 2] <= _heights_at(field, p[:, 0], p[:, 1])
            hi = np.where(below, mid, hi)
            lo = np.where(below, lo, mid)
        mid = 0.5 * (lo + hi)
        pts_world = origin[None, :] + mid[:, None] * d
        pts_world[:, 2] = _heights_at(field, pts_world[:, 0], pts_world[:, 1])
    else:
        pts_world = np.zeros((0, 3), dtype=np.float64)

    # Express in the odometry frame: sensor-frame measurement mapped through
    # the reported pose.
    pts_sensor = (pts_world - origin) @ rot
    rep = state.reported_pose
    pts_odo = pts_sensor @ rotation_matrix(rep).T + rep.translation()
    if model.point_noise > 0 and pts_odo.shape[0]:
        pts_odo = pts_odo + rng.uniform(-model.point_noise, model.point_noise, pts_odo.shape)

    assert pts_odo.shape[0] <= n_rays
    return PointCloud(points=pts_odo, stamp=state.time, reported_pose=rep)
