"""sklearn-style facade over the maintained feature map.

ElevationMapper is the streaming entry point used by the collection and live
pipelines: feed it one LiDAR frame at a time with partial_fit, and pull the
network input tensor with transform(). Parameters follow sklearn's
get_params/set_params conventions so the mapper composes with pipelines and
grid search tooling.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import DataError
from .features import (
    GridSpec,
    Normalization,
    PointFeatureMap,
    integrate,
    observation_rate,
    rasterize,
    recenter,
    to_network_input,
)
from .validation import check_points


class ElevationMapper(BaseEstimator):
    """Streaming robot-centric elevation statistics.

    Parameters
    ----------
    cells : grid side length in cells (default 125, a 5 m window at 4 cm).
    resolution : cell size in meters.
    decay : per-update point count decay factor gamma.
    count_cap : maximum effective point count per cell.
    outlier_band : points with |z - reference| above this are rejected.

    The fitted state lives in `map_` (a PointFeatureMap); `reference_` is
    the height reference used for outlier rejection and tensor export,
    typically the ground elevation under the sensor.
    """

    def __init__(
        self,
        cells: int = 125,
        resolution: float = 0.04,
        decay: float = 0.90,
        count_cap: float = 100.0,
        outlier_band: float = 2.0,
    ):
        self.cells = cells
        self.resolution = resolution
        self.decay = decay
        self.count_cap = count_cap
        self.outlier_band = outlier_band

    def _reset(self):
        self.map_ = None
        self.reference_ = 0.0
        self.n_frames_ = 0

    def fit(self, X, y=None, **kwargs):
        """Reset the map and absorb one frame (sklearn fit semantics)."""
        self._reset()
        return self.partial_fit(X, **kwargs)

    def partial_fit(self, X, y=None, body_xy=None, reference=None):
        """Fold one point cloud (odometry frame) into the maintained map.

        body_xy recenters the grid window on the body position first;
        reference updates the height reference used for outlier rejection
        and export normalization.
        """
        pts = check_points(getattr(X, "points", X))
        if not hasattr(self, "map_") or self.map_ is None:
            if not hasattr(self, "map_"):
                self._reset()
            center = body_xy if body_xy is not None else (0.0, 0.0)
            half = self.cells // 2
            ox = math.floor(float(center[0]) / self.resolution + 1e-9) - half
            oy = math.floor(float(center[1]) / self.resolution + 1e-9) - half
            grid = GridSpec(self.cells, self.resolution, ox, oy)
            self.map_ = PointFeatureMap.zero(grid, decay=self.decay, count_cap=self.count_cap)
        if reference is not None:
            self.reference_ = float(reference)
        if body_xy is not None:
            recenter(self.map_, body_xy)
        if self.outlier_band is not None and pts.shape[0]:
            keep = np.abs(pts[:, 2] - self.reference_) <= self.outlier_band
            pts = pts[keep]
        frame = rasterize(pts, self.map_.grid)
        integrate(self.map_, frame)
        self.n_frames_ += 1
        return self

    def _check_fitted(self):
        if not hasattr(self, "map_") or self.map_ is None:
            raise DataError("mapper has not seen any frames yet; call partial_fit first")

    def transform(self, X=None) -> np.ndarray:
        """Export the 7-channel float32 network input for the current map."""
        self._check_fitted()
        norm = Normalization(height_reference=self.reference_, count_scale=self._count_scale())
        return to_network_input(self.map_, norm).data

    def _count_scale(self) -> float:
        return self.count_cap if math.isfinite(self.count_cap) else 1.0

    def observation_rate(self, region=None) -> float:
        self._check_fitted()
        return observation_rate(self.map_, region)

    def snapshot(self) -> PointFeatureMap:
        self._check_fitted()
        return self.map_.snapshot()
