"""Perspective projection of LiDAR point clouds into depth rasters.

Points are transformed into the camera frame (X_cam = R P + T),
projected through the intrinsics K with perspective division, and
rasterised into a cropped window with a nearest-wins z-buffer. Pixel
values store camera-frame depth on a fixed scale, depth / max_range
clamped to [0, 1], so severities of later corruption stay comparable
across frames; 0 means no return.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError
from .raster import Raster

__all__ = [
    "PointCloud",
    "CalibMatrices",
    "project_points",
    "normalize_raster",
    "camera_point",
    "DEFAULT_OUT_SIZE",
    "DEFAULT_MAX_RANGE",
]

DEFAULT_OUT_SIZE = (512, 128)  # (width, height) pixels
DEFAULT_MAX_RANGE = 80.0  # meters


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Sensor-frame points, one row per return: x, y, z (meters), intensity."""

    points: np.ndarray  # (n, 4) float64

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 4)
        if pts.size and not np.all(np.isfinite(pts[:, :3])):
            raise ValueError("point coordinates must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class CalibMatrices:
    """Sensor-to-image calibration: intrinsics K, rotation R, translation T.

    A sensor-frame point P maps to the image plane via perspective
    division of K (R P + T). R must be orthonormal (within 1e-6) and K
    upper-triangular with positive focal lengths.
    """

    intrinsics: np.ndarray  # (3, 3)
    rotation: np.ndarray    # (3, 3) orthonormal
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        k = np.ascontiguousarray(self.intrinsics, dtype=np.float64)
        r = np.ascontiguousarray(self.rotation, dtype=np.float64)
        t = np.ascontiguousarray(self.translation, dtype=np.float64).reshape(3)
        if k.shape != (3, 3) or r.shape != (3, 3):
            raise CalibrationError(f"K and R must be 3x3, got {k.shape} and {r.shape}")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6:
            raise CalibrationError("rotation matrix is not orthonormal within 1e-6")
        lower = np.abs([k[1, 0], k[2, 0], k[2, 1]])
        if np.max(lower) > 1e-9 * max(1.0, float(np.max(np.abs(k)))):
            raise CalibrationError("intrinsics must be upper-triangular")
        if k[0, 0] <= 0 or k[1, 1] <= 0 or k[2, 2] <= 0:
            raise CalibrationError("intrinsics diagonal must be positive")
        for arr in (k, r, t):
            arr.flags.writeable = False
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CalibMatrices":
        return cls(np.eye(3), np.eye(3), np.zeros(3))

    @property
    def principal_point(self) -> tuple[float, float]:
        k = self.intrinsics
        return float(k[0, 2] / k[2, 2]), float(k[1, 2] / k[2, 2])


def _default_crop_origin(calib: CalibMatrices, out_size: tuple[int, int]) -> tuple[float, float]:
    # full image assumed (2*cx, 2*cy) around the principal point;
    # crop horizontally centered, flush with the bottom edge
    cx, cy = calib.principal_point
    w, h = out_size
    return cx - w / 2.0, 2.0 * cy - h


def project_points(
    cloud: PointCloud,
    calib: CalibMatrices,
    out_size: tuple[int, int] = DEFAULT_OUT_SIZE,
    max_range: float = DEFAULT_MAX_RANGE,
    *,
    crop_origin: tuple[float, float] | None = None,
) -> Raster:
    """Render a point cloud as a normalized depth raster.

    Parameters
    ----------
    out_size : (width, height)
        Crop window size in pixels; the output raster has exactly
        these dimensions.
    max_range : float
        Depth mapping to pixel value 1.0; nearer depths scale
        linearly, farther ones clamp.
    crop_origin : (u0, v0), optional
        Image-plane coordinates of the crop's top-left corner. Default
        places the window horizontally centered on the principal point
        and flush with the bottom of the nominal (2*cx, 2*cy) image.

    Points behind the camera (camera-frame z <= 0) and points falling
    outside the crop are discarded; where several points land on one
    pixel the nearest survives.
    """
    if max_range <= 0:
        raise ValueError(f"max_range must be positive, got {max_range}")
    w, h = int(out_size[0]), int(out_size[1])
    if w <= 0 or h <= 0:
        raise ValueError(f"out_size must be positive, got {out_size}")
    if crop_origin is None:
        u0, v0 = _default_crop_origin(calib, (w, h))
    else:
        u0, v0 = float(crop_origin[0]), float(crop_origin[1])

    depth_buffer = np.full((h, w), np.inf)
    pts = cloud.points
    if len(cloud):
        cam = pts[:, :3] @ calib.rotation.T + calib.translation
        front = cam[:, 2] > 0.0
        cam = cam[front]
        if cam.shape[0]:
            proj = cam @ calib.intrinsics.T
            u = proj[:, 0] / proj[:, 2]
            v = proj[:, 1] / proj[:, 2]
            cols = np.floor(u - u0).astype(np.int64)
            rows = np.floor(v - v0).astype(np.int64)
            inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
            np.minimum.at(depth_buffer, (rows[inside], cols[inside]), cam[inside, 2])

    hit = np.isfinite(depth_buffer)
    pixels = np.zeros((h, w))
    pixels[hit] = np.clip(depth_buffer[hit] / max_range, 0.0, 1.0)
    return Raster(pixels)


def camera_point(calib: CalibMatrices, u: float, v: float, depth: float) -> np.ndarray:
    """Invert the projection: image coordinates + depth -> camera frame.

    Solves K X = depth * (u, v, 1)^T; exact inverse of the forward
    mapping for points in front of the camera.
    """
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    rhs = np.array([u, v, 1.0]) * depth
    return np.linalg.solve(calib.intrinsics, rhs)


def normalize_raster(values: np.ndarray) -> np.ndarray:
    """Affinely map [min, max] onto [0, 1]; constant input maps to zeros.

    Idempotent: applying it twice gives the same values as once.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values.copy()
    if not np.all(np.isfinite(values)):
        raise ValueError("raster values must be finite")
    lo = float(values.min())
    hi = float(values.max())
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)
