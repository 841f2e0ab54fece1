"""Robot-centric dense elevation mapping engine.

Converts sparse, noisy simulated LiDAR streams into maintained per-cell
statistical features, exports training shards, evaluates reconstructions,
and talks to an external dense-reconstruction service over a framed socket
protocol.
"""

from .baseline import IterativeInpainter, inpaint_iterative, naive_height
from .exceptions import (
    AlignmentError,
    BoundaryError,
    DataError,
    ElevmapError,
    EndpointError,
    PlacementError,
    ProtocolError,
)
from .features import (
    FeatureTensor,
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
from .geometry import Pose, rotation_matrix
from .lidar import (
    LidarModel,
    OdometryNoise,
    PointCloud,
    TrajectoryConfig,
    TrajectoryState,
    advance_trajectory,
    init_trajectory,
    perturb_odometry,
    scan,
)
from .mapper import ElevationMapper
from .metrics import MetricReport, build_mask, densify_bilinear, mmae, mmgd, psnr, ssim
from .terrain import (
    EdgeParams,
    HeightField,
    RobotConfig,
    TerrainSpec,
    edge_map,
    extract_patch,
    footprint_pose,
    generate_terrain,
    load_terrain_spec,
    parse_terrain_spec,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "BoundaryError",
    "DataError",
    "EdgeParams",
    "ElevationMapper",
    "ElevmapError",
    "EndpointError",
    "FeatureTensor",
    "FrameFeatures",
    "GridSpec",
    "HeightField",
    "IterativeInpainter",
    "LidarModel",
    "MetricReport",
    "Normalization",
    "OdometryNoise",
    "PlacementError",
    "PointCloud",
    "PointFeatureMap",
    "Pose",
    "ProtocolError",
    "RobotConfig",
    "TerrainSpec",
    "TrajectoryConfig",
    "TrajectoryState",
    "advance_trajectory",
    "build_mask",
    "decay_counts",
    "denormalize",
    "densify_bilinear",
    "edge_map",
    "extract_patch",
    "footprint_pose",
    "generate_terrain",
    "init_trajectory",
    "inpaint_iterative",
    "integrate",
    "load_terrain_spec",
    "mmae",
    "mmgd",
    "naive_height",
    "observation_rate",
    "parse_terrain_spec",
    "perturb_odometry",
    "psnr",
    "rasterize",
    "recenter",
    "rotation_matrix",
    "scan",
    "ssim",
    "to_network_input",
]
