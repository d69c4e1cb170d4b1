"""Seeded sensor corruptions: gaussian noise, motion blur, frost.

Each kind has a fixed five-level severity ladder; level 0 is the exact
identity. All randomness comes from the Philox counter-based generator
(numpy's Philox4x32-10) keyed by (seed, kind salt), with whole noise
fields drawn in a single vectorised call, so outputs are bit-identical
across runs, platforms, and any per-image parallelism. Severity level
is deliberately *not* part of the key: one seed yields one noise field
per kind and the levels only rescale it, which makes per-pixel change
magnitudes non-decreasing in level.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import Raster

__all__ = ["CorruptionKind", "CorruptionSpec", "corrupt", "severity_ladder"]

_MASK64 = (1 << 64) - 1


class CorruptionKind(enum.Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    MOTION_BLUR = "motion_blur"
    FROST = "frost"


# stream salts (ASCII tags) separating the per-kind Philox keys
_KIND_SALT = {
    CorruptionKind.GAUSSIAN_NOISE: 0x67617573,  # "gaus"
    CorruptionKind.MOTION_BLUR: 0x6D6F7469,     # "moti"
    CorruptionKind.FROST: 0x66726F73,           # "fros"
}

_GAUSS_SIGMA = (0.08, 0.12, 0.18, 0.26, 0.38)
_BLUR_LEN = (7, 11, 15, 19, 23)
_FROST_OPACITY = (0.25, 0.35, 0.45, 0.55, 0.65)
_FROST_COVERAGE = (0.30, 0.40, 0.50, 0.60, 0.70)

# frost crystal lattice: (cell_y, cell_x, weight) per octave; wide cells
# elongate the crystals horizontally
_FROST_OCTAVES = ((12, 36, 0.55), (6, 18, 0.30), (3, 9, 0.15))


@dataclass(frozen=True)
class CorruptionSpec:
    """What to apply: kind, severity level (0 = identity), RNG seed."""

    kind: CorruptionKind
    level: int
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.kind, CorruptionKind):
            raise ValueError(f"kind must be a CorruptionKind, got {self.kind!r}")
        if not (isinstance(self.level, int) and 0 <= self.level <= 5):
            raise ValueError(f"level must be an integer in [0, 5], got {self.level}")
        if not (isinstance(self.seed, int) and 0 <= self.seed <= _MASK64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def severity_ladder(kind: CorruptionKind) -> tuple[dict, ...]:
    """Fixed parameter sets for levels 1..5, monotone in intensity."""
    if kind is CorruptionKind.GAUSSIAN_NOISE:
        return tuple({"sigma": s} for s in _GAUSS_SIGMA)
    if kind is CorruptionKind.MOTION_BLUR:
        return tuple({"kernel_len": n} for n in _BLUR_LEN)
    if kind is CorruptionKind.FROST:
        return tuple(
            {"opacity": o, "coverage": c}
            for o, c in zip(_FROST_OPACITY, _FROST_COVERAGE)
        )
    raise ValueError(f"unknown corruption kind {kind!r}")


def _field_rng(seed: int, kind: CorruptionKind) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.array([seed & _MASK64, _KIND_SALT[kind]], dtype=np.uint64))
    )


def corrupt(img: Raster, spec: CorruptionSpec, *, blur_angle_deg: float = 0.0) -> Raster:
    """Apply one corruption at the given severity.

    Level 0 returns the input unchanged. Outputs are clamped to [0, 1]
    and fully determined by (img, spec, blur_angle_deg).
    """
    if spec.level == 0:
        return img
    params = severity_ladder(spec.kind)[spec.level - 1]
    px = img.pixels
    if spec.kind is CorruptionKind.GAUSSIAN_NOISE:
        noise = _field_rng(spec.seed, spec.kind).standard_normal(px.shape)
        out = np.clip(px + params["sigma"] * noise, 0.0, 1.0)
    elif spec.kind is CorruptionKind.MOTION_BLUR:
        kernel = _line_kernel(params["kernel_len"], blur_angle_deg)
        if px.ndim == 2:
            out = ndimage.convolve(px, kernel, mode="reflect")
        else:
            out = np.stack(
                [ndimage.convolve(px[:, :, c], kernel, mode="reflect") for c in range(3)],
                axis=2,
            )
        out = np.clip(out, 0.0, 1.0)
    else:  # FROST
        alpha = params["opacity"] * _frost_mask(
            _field_rng(spec.seed, spec.kind), img.height, img.width, params["coverage"]
        )
        if px.ndim == 3:
            alpha = alpha[:, :, None]
        out = np.clip(px * (1.0 - alpha) + alpha, 0.0, 1.0)
    return Raster(out)


def _line_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Normalized 1-pixel-wide line kernel of the given length and angle."""
    if angle_deg == 0.0:
        return np.full((1, length), 1.0 / length)
    theta = math.radians(angle_deg)
    c = (length - 1) // 2
    kernel = np.zeros((length, length))
    for t in np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, length):
        x = int(round(c + t * math.cos(theta)))
        y = int(round(c + t * math.sin(theta)))
        kernel[y, x] += 1.0
    return kernel / kernel.sum()


def _value_noise(rng: np.random.Generator, h: int, w: int, cell_y: int, cell_x: int) -> np.ndarray:
    """Bilinearly interpolated random lattice, values in [0, 1]."""
    grid = rng.random((h // cell_y + 2, w // cell_x + 2))
    ys = np.arange(h) / cell_y
    xs = np.arange(w) / cell_x
    y0 = ys.astype(np.int64)
    x0 = xs.astype(np.int64)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    g00 = grid[np.ix_(y0, x0)]
    g01 = grid[np.ix_(y0, x0 + 1)]
    g10 = grid[np.ix_(y0 + 1, x0)]
    g11 = grid[np.ix_(y0 + 1, x0 + 1)]
    top = g00 * (1.0 - fx) + g01 * fx
    bottom = g10 * (1.0 - fx) + g11 * fx
    return top * (1.0 - fy) + bottom * fy


def _frost_mask(rng: np.random.Generator, h: int, w: int, coverage: float) -> np.ndarray:
    """Soft crystal mask covering the given fraction of pixels.

    Thresholds a fixed multi-octave value-noise field at the coverage
    quantile; the soft edge ramps from 0 at the threshold to 1 at the
    field maximum. Lower thresholds (higher coverage) grow the mask
    pointwise, which keeps corruption energy monotone in level.
    """
    field = np.zeros((h, w))
    for cell_y, cell_x, weight in _FROST_OCTAVES:
        field += weight * _value_noise(rng, h, w, cell_y, cell_x)
    threshold = float(np.quantile(field, 1.0 - coverage))
    peak = float(field.max())
    if peak <= threshold:
        return np.zeros((h, w))
    return np.sqrt(np.clip((field - threshold) / (peak - threshold), 0.0, 1.0))
