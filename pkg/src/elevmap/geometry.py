"""Rigid-body poses and frame transforms shared by the simulator and mapper."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Pose:
    """6-DoF pose: translation in meters, orientation as roll/pitch/yaw in radians.

    Pitch is positive nose-up: standing on terrain that rises with grade g
    along the heading gives pitch == atan(g). Roll is positive when the
    ground rises along the body +y axis.
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def angles(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw], dtype=np.float64)

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x, self.y, self.z, self.roll, self.pitch, self.yaw], dtype=np.float64
        )

    @classmethod
    def from_array(cls, a) -> "Pose":
        a = np.asarray(a, dtype=np.float64).reshape(6)
        return cls(*(float(v) for v in a))


def rotation_matrix(pose: Pose) -> np.ndarray:
    """World-from-body rotation for a pose.

    Composed as yaw about +z, then pitch about -y (so positive pitch lifts
    the body x-axis), then roll about +x.
    """
    cr, sr = math.cos(pose.roll), math.sin(pose.roll)
    cp, sp = math.cos(pose.pitch), math.sin(pose.pitch)
    cy, sy = math.cos(pose.yaw), math.sin(pose.yaw)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    ry = np.array([[cp, 0.0, -sp], [0.0, 1.0, 0.0], [sp, 0.0, cp]])
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def transform_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Map points from the body frame of `pose` into the world frame."""
    r = rotation_matrix(pose)
    return points @ r.T + pose.translation()


def inverse_transform_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    """Map world-frame points into the body frame of `pose`."""
    r = rotation_matrix(pose)
    return (points - pose.translation()) @ r
