"""In-memory raster images: single-channel depth or 3-channel RGB.

Pixel values are float64 in [0, 1]. A depth raster uses 0 for "no
return"; RGB rasters are plain normalized intensities. The pixel array
is frozen on construction so rasters can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError

__all__ = ["Raster"]


@dataclass(frozen=True, eq=False)
class Raster:
    pixels: np.ndarray  # (h, w) or (h, w, 3) float64 in [0, 1]

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if px.ndim == 3 and px.shape[2] == 1:
            px = px[:, :, 0]
        if px.ndim not in (2, 3):
            raise FormatError(f"raster must be 2-D or 3-D, got shape {px.shape}")
        if px.ndim == 3 and px.shape[2] != 3:
            raise FormatError(f"3-D rasters must have 3 channels, got {px.shape[2]}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise FormatError("raster values must lie in [0, 1]")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]

    def same_as(self, other: "Raster") -> bool:
        """Exact value equality, including shape."""
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )
