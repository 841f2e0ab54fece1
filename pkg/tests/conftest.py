import numpy as np
import pytest

from elevmap import (
    HeightField,
    LidarModel,
    OdometryNoise,
    TerrainSpec,
    TrajectoryConfig,
    generate_terrain,
)


@pytest.fixture(scope="session")
def flat_field():
    spec = TerrainSpec(
        flat_regions=1, staircases=0, slopes=0, corridors=0, obstacles=0, seed=7
    )
    return generate_terrain(spec)


@pytest.fixture(scope="session")
def stair_field():
    spec = TerrainSpec(
        flat_regions=0,
        staircases=1,
        slopes=0,
        corridors=0,
        obstacles=0,
        stair_rise=(0.17, 0.17),
        stair_run=(0.28, 0.28),
        stair_steps=(5, 5),
        seed=3,
    )
    return generate_terrain(spec)


@pytest.fixture(scope="session")
def mixed_field():
    return generate_terrain(TerrainSpec(seed=11))


@pytest.fixture
def quiet_trajectory():
    """No vibration, no odometry error: reported pose equals true pose."""
    return TrajectoryConfig(
        center=(10.0, 10.0),
        radius=4.0,
        vibration=0.0,
        odometry=OdometryNoise(translation=0.0, rotation=0.0),
    )


@pytest.fixture
def noiseless_lidar():
    return LidarModel(point_noise=0.0)


def plane_field(a: float, b: float, d: float = 0.0, cells: int = 200, res: float = 0.04):
    """Heightfield whose cell centers lie exactly on z = a*x + b*y + d."""
    xs = (np.arange(cells) + 0.5) * res
    ys = (np.arange(cells) + 0.5) * res
    heights = a * xs[None, :] + b * ys[:, None] + d
    return HeightField(heights=heights, resolution=res, origin=(0.0, 0.0))
