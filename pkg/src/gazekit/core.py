"""Shared domain types and coordinate conventions.

Coordinates are ordered x-then-y with the origin at the image top-left.
Pixel-space boxes are continuous; serialized boxes live on a 1000-bin
integer grid per axis (bins 0..999).  All types are immutable value
objects and all operations are pure functions.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import InvalidInputError

NORM_BINS = 1000


class Task(str, Enum):
    """The tasks a conversation record or prediction can address."""

    PERSON_DETECTION = "person_detection"
    GAZE_TARGET = "gaze_target"
    GAZE_OBJECT = "gaze_object"
    GAZE_INOUT = "gaze_inout"


@dataclass(frozen=True)
class ImageSize:
    """Image extent in pixels."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInputError(f"image size must be >= 1x1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in continuous pixel coordinates, corners (x1,y1)-(x2,y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise InvalidInputError(f"box coordinates must be finite, got {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidInputError(f"box corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def area(self) -> float:
        return self.width * self.height

    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    def clamped(self, size: ImageSize) -> "PixelBox":
        """Return a copy clamped into ``[0, width] x [0, height]``."""
        return PixelBox(
            min(max(self.x1, 0.0), size.width),
            min(max(self.y1, 0.0), size.height),
            min(max(self.x2, 0.0), size.width),
            min(max(self.y2, 0.0), size.height),
        )

    def within(self, size: ImageSize) -> bool:
        return 0 <= self.x1 and 0 <= self.y1 and self.x2 <= size.width and self.y2 <= size.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class NormBox:
    """Axis-aligned box with coordinates quantized to integer bins in [0, 999]."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            try:
                object.__setattr__(self, name, operator.index(getattr(self, name)))
            except TypeError:
                raise InvalidInputError(f"normalized coordinate {name} must be an integer") from None
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(0 <= c < NORM_BINS for c in coords):
            raise InvalidInputError(f"normalized coordinates must be bins in [0, 999], got {coords}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidInputError(f"box corners out of order: {coords}")

    def center_norm(self) -> tuple[float, float]:
        """Box center in [0, 1] coordinates under the bin-center convention."""
        return (self.x1 + self.x2 + 1) / (2 * NORM_BINS), (self.y1 + self.y2 + 1) / (2 * NORM_BINS)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return self.x1, self.y1, self.x2, self.y2


@dataclass(frozen=True)
class GazePoint:
    """A point in normalized image coordinates, both axes in [0, 1]."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidInputError(f"gaze point must be finite, got ({self.x}, {self.y})")
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise InvalidInputError(f"gaze point out of [0, 1] range: ({self.x}, {self.y})")


@dataclass(frozen=True)
class Detection:
    """One detector output: a pixel box, an open-vocabulary class, a confidence."""

    bbox: PixelBox
    class_label: str
    score: float

    def __post_init__(self):
        if not self.class_label:
            raise InvalidInputError("detection class label must be non-empty")
        if not (0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"detection score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class AnnotatedSample:
    """One ground-truth gaze instance.

    ``gaze_points`` holds up to ten annotator points; it is empty only for
    out-of-frame samples.  ``gazed_object`` is present when the dataset
    carries object-level ground truth.
    """

    sample_id: str
    image_path: str
    depth_path: Optional[str]
    image_size: ImageSize
    head_box: PixelBox
    eye_point: GazePoint
    gaze_points: tuple[GazePoint, ...]
    in_frame: bool
    gazed_object: Optional[Detection] = None

    def __post_init__(self):
        if not self.sample_id:
            raise InvalidInputError("sample_id must be non-empty")
        if self.in_frame and not self.gaze_points:
            raise InvalidInputError(f"{self.sample_id}: in-frame sample requires at least one gaze point")
        if len(self.gaze_points) > 10:
            raise InvalidInputError(f"{self.sample_id}: at most 10 gaze points per sample")
        if not self.head_box.within(self.image_size):
            raise InvalidInputError(f"{self.sample_id}: head box outside image bounds")

    def gaze_centroid(self) -> Optional[GazePoint]:
        """Mean of the annotated gaze points, or None for out-of-frame samples."""
        if not self.gaze_points:
            return None
        n = len(self.gaze_points)
        return GazePoint(
            sum(p.x for p in self.gaze_points) / n,
            sum(p.y for p in self.gaze_points) / n,
        )


@dataclass(frozen=True)
class Prediction:
    """Structured model output for one sample.

    ``boxes`` keeps every box found in the response, in textual order.  When
    ``class_label`` is present, the last box is the one bound to it by the
    reference grammar; the first box is the gaze box.
    """

    sample_id: str
    task: Task
    boxes: tuple[NormBox, ...]
    class_label: Optional[str]
    out_of_frame: bool
    out_score: Optional[float]
    raw_text: str
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.out_score is not None and not (0.0 <= self.out_score <= 1.0):
            raise InvalidInputError(f"out_score must be in [0, 1], got {self.out_score}")
        if self.task is Task.GAZE_TARGET and not self.out_of_frame and not self.boxes:
            raise InvalidInputError("gaze-target prediction must carry a box unless out of frame")
        if self.task is Task.GAZE_OBJECT and self.boxes and self.class_label is None:
            raise InvalidInputError("gaze-object prediction with a box must carry a class label")

    def gaze_point(self) -> Optional[GazePoint]:
        """Center of the first predicted box as a normalized point."""
        if not self.boxes:
            return None
        x, y = self.boxes[0].center_norm()
        return GazePoint(x, y)

    def object_box(self) -> Optional[NormBox]:
        """The box bound to the predicted class label, if any."""
        if self.class_label is None or not self.boxes:
            return None
        return self.boxes[-1]


def _check_extent(extent: float) -> float:
    try:
        extent = float(extent)
    except (TypeError, ValueError):
        raise InvalidInputError(f"extent must be a number, got {extent!r}") from None
    if not math.isfinite(extent) or extent <= 0:
        raise InvalidInputError(f"extent must be positive and finite, got {extent}")
    return extent


def norm_coord(v: float, extent: float) -> int:
    """Quantize a pixel coordinate to an integer bin in [0, 999].

    Uses floor with a clamp so ``v == extent`` maps to bin 999.
    """
    extent = _check_extent(extent)
    v = float(v)
    if not math.isfinite(v):
        raise InvalidInputError(f"coordinate must be finite, got {v}")
    b = math.floor(v / extent * NORM_BINS)
    return min(max(b, 0), NORM_BINS - 1)


def denorm_coord(bin_index: int, extent: float) -> float:
    """Map an integer bin back to a pixel coordinate at the bin center."""
    try:
        bin_index = int(operator.index(bin_index))
    except TypeError:
        raise InvalidInputError(f"bin must be an integer, got {bin_index!r}") from None
    if not (0 <= bin_index < NORM_BINS):
        raise InvalidInputError(f"bin must be in [0, 999], got {bin_index}")
    extent = _check_extent(extent)
    return (bin_index + 0.5) / NORM_BINS * extent


def norm_box(box: PixelBox, size: ImageSize) -> NormBox:
    """Quantize a pixel box to the 1000-bin grid of its image."""
    return NormBox(
        norm_coord(box.x1, size.width),
        norm_coord(box.y1, size.height),
        norm_coord(box.x2, size.width),
        norm_coord(box.y2, size.height),
    )


def denorm_box(box: NormBox, size: ImageSize) -> PixelBox:
    """Map a bin-grid box back to pixel coordinates (bin centers)."""
    return PixelBox(
        denorm_coord(box.x1, size.width),
        denorm_coord(box.y1, size.height),
        denorm_coord(box.x2, size.width),
        denorm_coord(box.y2, size.height),
    )
