"""Geocentric HHA encoding of single-channel depth maps.

A depth map becomes a three-channel 8-bit image: horizontal disparity
(inverse depth), height (vertical pixel position), and the angle between
the local surface normal and the viewing direction.  The pipeline is

    rescale depth to [lo, hi]
        -> disparity channel       (1 / depth, stretched to [0, 255])
        -> height channel          (row ramp, independent of depth)
        -> Sobel gradients -> surface normals -> angle channel

Channels are computed in double precision and quantized to 8 bits once,
at stacking time, by round-half-up.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ImageSize
from .errors import InvalidInputError

# Sobel taps in row-major order, zero weights omitted.  Both the production
# path and any reference convolution must accumulate in this exact order for
# results to agree bit-for-bit.
SOBEL_TAPS_X: tuple[tuple[tuple[int, int], float], ...] = (
    ((-1, -1), -1.0), ((-1, 1), 1.0),
    ((0, -1), -2.0), ((0, 1), 2.0),
    ((1, -1), -1.0), ((1, 1), 1.0),
)
SOBEL_TAPS_Y: tuple[tuple[tuple[int, int], float], ...] = (
    ((-1, -1), -1.0), ((-1, 0), -2.0), ((-1, 1), -1.0),
    ((1, -1), 1.0), ((1, 0), 2.0), ((1, 1), 1.0),
)


@dataclass(frozen=True)
class HhaConfig:
    """Tuning knobs for the encoding.

    ``constant_channel_value`` fills the disparity/angle channels when their
    pre-normalization grid is constant and carries no information.
    """

    rescale_lo: float = 1.0
    rescale_hi: float = 10.0
    epsilon: float = 1e-6
    constant_channel_value: int = 0

    def __post_init__(self):
        if not self.rescale_lo < self.rescale_hi:
            raise InvalidInputError(
                f"rescale_lo must be < rescale_hi, got [{self.rescale_lo}, {self.rescale_hi}]"
            )
        if self.epsilon <= 0:
            raise InvalidInputError(f"epsilon must be positive, got {self.epsilon}")
        if not (0 <= self.constant_channel_value <= 255):
            raise InvalidInputError(
                f"constant_channel_value must be an 8-bit value, got {self.constant_channel_value}"
            )


@dataclass(frozen=True)
class DepthMap:
    """An H x W grid of non-negative finite depth values, arbitrary units."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidInputError(f"depth map must be a 2-D grid, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("depth map contains non-finite values")
        if np.any(v < 0):
            raise InvalidInputError("depth map contains negative values")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> ImageSize:
        h, w = self.values.shape
        return ImageSize(width=w, height=h)


@dataclass(frozen=True)
class HhaImage:
    """Three quantized channels sharing one image size."""

    disparity: np.ndarray
    height: np.ndarray
    angle: np.ndarray
    size: ImageSize

    def __post_init__(self):
        for name in ("disparity", "height", "angle"):
            ch = np.asarray(getattr(self, name))
            if ch.shape != (self.size.height, self.size.width):
                raise InvalidInputError(f"{name} channel shape {ch.shape} does not match {self.size}")
            if ch.dtype != np.uint8:
                raise InvalidInputError(f"{name} channel must be uint8, got {ch.dtype}")

    def to_array(self) -> np.ndarray:
        """Stack as an (H, W, 3) array in disparity/height/angle order."""
        return np.stack([self.disparity, self.height, self.angle], axis=-1)


def normalize_range(
    grid: np.ndarray,
    lo: float,
    hi: float,
    constant_value: Optional[float] = None,
) -> np.ndarray:
    """Linearly map a grid so its min hits ``lo`` and its max hits ``hi``.

    A constant grid carries no information; it maps to ``constant_value``
    when given, otherwise to ``lo``.
    """
    if lo >= hi:
        raise InvalidInputError(f"normalize_range requires lo < hi, got [{lo}, {hi}]")
    g = np.asarray(grid, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise InvalidInputError("normalize_range input contains non-finite values")
    gmin = g.min()
    gmax = g.max()
    if gmax == gmin:
        fill = lo if constant_value is None else float(constant_value)
        return np.full_like(g, fill)
    return (g - gmin) / (gmax - gmin) * (hi - lo) + lo


def rescale_depth(depth: DepthMap, cfg: HhaConfig = HhaConfig()) -> DepthMap:
    """Compress the depth range into [lo, hi] to tame the inverse-depth step."""
    return DepthMap(normalize_range(depth.values, cfg.rescale_lo, cfg.rescale_hi))


def disparity_channel(rescaled: DepthMap, cfg: HhaConfig = HhaConfig()) -> np.ndarray:
    """Inverse depth stretched to [0, 255]; nearer pixels score higher."""
    inv = 1.0 / np.maximum(rescaled.values, cfg.epsilon)
    return normalize_range(inv, 0.0, 255.0, constant_value=cfg.constant_channel_value)


def height_channel(size: ImageSize) -> np.ndarray:
    """Row ramp: pixel at row y gets (y / H) * 255, identical across columns."""
    ramp = np.arange(size.height, dtype=np.float64) / size.height * 255.0
    return np.repeat(ramp[:, None], size.width, axis=1)


def sobel_gradients(depth: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel derivatives with edge replication at the borders.

    Returns ``(gx, gy)`` where gx is the horizontal (column-direction)
    derivative and gy the vertical one.
    """
    h, w = depth.values.shape
    if h < 3 or w < 3:
        raise InvalidInputError(f"Sobel needs at least a 3x3 map, got {h}x{w}")
    padded = np.pad(depth.values, 1, mode="edge")
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for (dy, dx), weight in SOBEL_TAPS_X:
        gx += weight * padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    for (dy, dx), weight in SOBEL_TAPS_Y:
        gy += weight * padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
    return gx, gy


def surface_normals(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Per-pixel unit normals (-gx, -gy, 1) / norm as an (H, W, 3) field.

    The z component is always positive because the unnormalized z is 1.
    """
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    if gx.shape != gy.shape:
        raise InvalidInputError(f"gradient grids must share a shape, got {gx.shape} vs {gy.shape}")
    n = np.stack([-gx, -gy, np.ones_like(gx)], axis=-1)
    norms = np.sqrt(np.sum(n * n, axis=-1, keepdims=True))
    return n / norms


def angle_channel(normals: np.ndarray, cfg: HhaConfig = HhaConfig()) -> np.ndarray:
    """Angle between each normal and the view direction (0, 0, 1), in [0, 255]."""
    nz = np.clip(normals[..., 2], -1.0, 1.0)
    angles = np.arccos(nz)
    return normalize_range(angles, 0.0, 255.0, constant_value=cfg.constant_channel_value)


def quantize_channel(channel: np.ndarray) -> np.ndarray:
    """Round-half-up to uint8.  Input must already lie in [0, 255]."""
    return np.floor(np.asarray(channel, dtype=np.float64) + 0.5).astype(np.uint8)


def encode_hha(depth: DepthMap, cfg: HhaConfig = HhaConfig()) -> HhaImage:
    """Run the full encoding pipeline on one depth map."""
    h, w = depth.values.shape
    if h < 3 or w < 3:
        raise InvalidInputError(f"HHA encoding needs at least a 3x3 map, got {h}x{w}")
    rescaled = rescale_depth(depth, cfg)
    disparity = disparity_channel(rescaled, cfg)
    height = height_channel(depth.size)
    gx, gy = sobel_gradients(rescaled)
    angle = angle_channel(surface_normals(gx, gy), cfg)
    return HhaImage(
        disparity=quantize_channel(disparity),
        height=quantize_channel(height),
        angle=quantize_channel(angle),
        size=depth.size,
    )
