"""Axis-aligned 2-D boxes with per-coordinate Gaussian uncertainty.

Boxes live in pixel coordinates. The canonical parameterisation is
center form (mu_x, mu_y, mu_w, mu_h): center point plus width and height,
each coordinate carrying its own variance. Corner form is derived.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "Modality",
    "GaussianBox",
    "CornerBox",
    "to_corners",
    "from_corners",
    "iou",
    "iou_matrix",
    "sigmoid_scale",
    "CLASS_NAMES",
]

CLASS_NAMES = ("car", "pedestrian", "cyclist")


class Modality(enum.Enum):
    """Which sensor pipeline produced a detection."""

    RGB = "rgb"
    DEPTH = "depth"


@dataclass(frozen=True)
class GaussianBox:
    """Detection box in center form with per-coordinate variances.

    Attributes
    ----------
    mu_x, mu_y : float
        Box center in pixels.
    mu_w, mu_h : float
        Box width and height in pixels, strictly positive.
    var_x, var_y, var_w, var_h : float
        Variance of each coordinate estimate, strictly positive and finite.
    score : float
        Detection confidence in [0, 1].
    class_id : int
        Object class index (0 = car, 1 = pedestrian, 2 = cyclist).
    modality : Modality
        Producing sensor pipeline.
    """

    mu_x: float
    mu_y: float
    mu_w: float
    mu_h: float
    var_x: float
    var_y: float
    var_w: float
    var_h: float
    score: float
    class_id: int
    modality: Modality

    def __post_init__(self):
        # normalize numpy scalars so equality and repr-based
        # serialization see plain floats
        for name in ("mu_x", "mu_y", "mu_w", "mu_h",
                     "var_x", "var_y", "var_w", "var_h", "score"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "class_id", int(self.class_id))
        if not (self.mu_w > 0 and self.mu_h > 0):
            raise ValueError(f"box extent must be positive, got w={self.mu_w}, h={self.mu_h}")
        for name in ("var_x", "var_y", "var_w", "var_h"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")

    @property
    def mean(self) -> np.ndarray:
        """Center-form coordinates as a length-4 array (x, y, w, h)."""
        return np.array([self.mu_x, self.mu_y, self.mu_w, self.mu_h])

    @property
    def variance(self) -> np.ndarray:
        """Per-coordinate variances as a length-4 array."""
        return np.array([self.var_x, self.var_y, self.var_w, self.var_h])

    def with_score(self, score: float) -> "GaussianBox":
        return replace(self, score=score)


@dataclass(frozen=True)
class CornerBox:
    """Axis-aligned box in corner form (x_min, y_min, x_max, y_max)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"corners must satisfy x_min < x_max and y_min < y_max, got {self}"
            )

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float, float, float]:
        """Center-form (x, y, w, h) tuple."""
        return (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
            self.x_max - self.x_min,
            self.y_max - self.y_min,
        )


def to_corners(box: GaussianBox) -> CornerBox:
    """Convert a center-form box to corner form."""
    half_w = box.mu_w / 2.0
    half_h = box.mu_h / 2.0
    return CornerBox(
        x_min=box.mu_x - half_w,
        y_min=box.mu_y - half_h,
        x_max=box.mu_x + half_w,
        y_max=box.mu_y + half_h,
    )


def from_corners(
    corners: CornerBox,
    *,
    variance: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0),
    score: float = 1.0,
    class_id: int = 0,
    modality: Modality = Modality.RGB,
) -> GaussianBox:
    """Build a center-form box from corners plus detection metadata."""
    x, y, w, h = corners.center
    return GaussianBox(
        mu_x=x,
        mu_y=y,
        mu_w=w,
        mu_h=h,
        var_x=variance[0],
        var_y=variance[1],
        var_w=variance[2],
        var_h=variance[3],
        score=score,
        class_id=class_id,
        modality=modality,
    )


def iou(a: CornerBox, b: CornerBox) -> float:
    """Intersection over union of two corner-form boxes.

    Returns 0 for disjoint or merely touching boxes. Result lies in [0, 1].
    """
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    if iw <= 0.0:
        return 0.0
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / ((a.area + b.area) - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two corner-form box arrays.

    Parameters
    ----------
    a : ndarray of shape (n, 4)
    b : ndarray of shape (m, 4)
        Columns are (x_min, y_min, x_max, y_max).

    Returns
    -------
    ndarray of shape (n, m)
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = (area_a[:, None] + area_b[None, :]) - inter
    return np.where(inter > 0, inter / union, 0.0)


def sigmoid_scale(raw: float) -> float:
    """Squash an unbounded coordinate or score onto (0, 1).

    Numerically stable logistic: never overflows for large |raw|.
    """
    if raw >= 0.0:
        return 1.0 / (1.0 + math.exp(-raw))
    e = math.exp(raw)
    return e / (1.0 + e)
