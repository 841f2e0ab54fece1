"""The simulation-to-map loop shared by dataset collection and live mapping.

One step advances the trajectory, scans, recenters the robot-centric map on
the reported body position, and integrates the frame. Ground truth patches
are extracted from the terrain over the exact world region the grid covers,
so the input tensor and the targets share cell indexing; the residual
offset between them is the odometry error the reconstruction model must
absorb.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .dataset import DatasetRecord
from .exceptions import BoundaryError
from .features import Normalization, to_network_input
from .lidar import (
    LidarModel,
    PointCloud,
    TrajectoryConfig,
    TrajectoryState,
    advance_trajectory,
    init_trajectory,
    scan,
)
from .mapper import ElevationMapper
from .terrain import HeightField, RobotConfig, edge_map, extract_patch


@dataclass
class StepResult:
    tensor: np.ndarray
    rate: float
    reference: float
    pose: np.ndarray
    preprocess_seconds: float
    grid_center: tuple[float, float]


class SimulationSession:
    """Owns the trajectory state and the mapper for a run over one terrain."""

    def __init__(
        self,
        field: HeightField,
        seed: int = 0,
        mapper: ElevationMapper | None = None,
        lidar: LidarModel | None = None,
        trajectory: TrajectoryConfig | None = None,
        robot: RobotConfig | None = None,
    ):
        self.field = field
        self.robot = robot or RobotConfig()
        self.lidar = lidar or LidarModel()
        self.mapper = mapper or ElevationMapper()
        self.state: TrajectoryState = init_trajectory(field, trajectory, self.robot, seed=seed)

    def step(self) -> StepResult:
        dt = 1.0 / self.lidar.rate
        advance_trajectory(self.state, dt)
        rep = self.state.reported_pose
        try:
            cloud = scan(self.field, self.state, self.lidar)
        except BoundaryError:
            # The blind loop trajectory can carry the sensor aperture inside
            # a tall feature; treat that as a frame with no returns.
            cloud = PointCloud(
                points=np.zeros((0, 3)), stamp=self.state.time, reported_pose=rep
            )
        reference = rep.z - self.robot.mount_height

        t0 = time.perf_counter()
        self.mapper.partial_fit(cloud, body_xy=(rep.x, rep.y), reference=reference)
        tensor = self.mapper.transform()
        preprocess = time.perf_counter() - t0

        rate = self.mapper.observation_rate()
        grid = self.mapper.map_.grid
        cx = grid.origin[0] + grid.extent / 2.0
        cy = grid.origin[1] + grid.extent / 2.0
        return StepResult(
            tensor=tensor,
            rate=rate,
            reference=reference,
            pose=rep.as_array(),
            preprocess_seconds=preprocess,
            grid_center=(cx, cy),
        )

    def ground_truth(self, result: StepResult) -> tuple[np.ndarray, np.ndarray]:
        """(height patch, edge patch) over the grid's world footprint."""
        grid = self.mapper.map_.grid
        patch = extract_patch(self.field, result.grid_center, grid.extent, grid.resolution)
        return patch, edge_map(patch)

    def record(self, result: StepResult) -> DatasetRecord:
        height, edge = self.ground_truth(result)
        observed = self.mapper.map_.observed.astype(np.uint8)
        return DatasetRecord(
            x=result.tensor,
            height=height.astype(np.float32),
            edge=edge,
            observed=observed,
            pose=result.pose,
            rate=result.rate,
        )

    def normalization(self) -> Normalization:
        return Normalization(
            height_reference=self.mapper.reference_, count_scale=self.mapper._count_scale()
        )
