"""Gazed-object assignment: overlap a small gaze box with detections.

The gaze point becomes a pixel-space box of configurable half-width; the
detection with the highest IoU against that box is the gazed object.  A
best IoU at or below ``min_iou`` means no assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .core import Detection, GazePoint, ImageSize, PixelBox
from .errors import InvalidInputError


class TieBreak(str, Enum):
    """How to resolve equal-IoU detections."""

    HIGHEST_SCORE = "highest_score"
    FIRST_INDEX = "first_index"


@dataclass(frozen=True)
class AssignConfig:
    """Assignment parameters.

    ``gaze_box_halfwidth`` is in pixels; when None it defaults to 2% of the
    image diagonal, so behaviour is scale invariant across resolutions.
    """

    gaze_box_halfwidth: Optional[float] = None
    tie_break: TieBreak = TieBreak.HIGHEST_SCORE
    min_iou: float = 0.0

    def __post_init__(self):
        if self.gaze_box_halfwidth is not None:
            hw = float(self.gaze_box_halfwidth)
            if not math.isfinite(hw) or hw <= 0:
                raise InvalidInputError(f"gaze_box_halfwidth must be positive, got {hw}")
            object.__setattr__(self, "gaze_box_halfwidth", hw)
        try:
            object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        except ValueError as exc:
            raise InvalidInputError(str(exc)) from None
        if not (0.0 <= self.min_iou < 1.0):
            raise InvalidInputError(f"min_iou must be in [0, 1), got {self.min_iou}")

    def halfwidth_for(self, size: ImageSize) -> float:
        if self.gaze_box_halfwidth is not None:
            return self.gaze_box_halfwidth
        return 0.02 * math.hypot(size.width, size.height)


def iou(a: PixelBox, b: PixelBox) -> float:
    """Intersection over union of two pixel boxes, in [0, 1]."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0:
        return 0.0
    return inter / union


def gaze_box(g: GazePoint, size: ImageSize, cfg: AssignConfig) -> PixelBox:
    """Pixel box of half-width ``cfg`` around the gaze point, clamped to the image."""
    hw = cfg.halfwidth_for(size)
    cx = g.x * size.width
    cy = g.y * size.height
    return PixelBox(cx - hw, cy - hw, cx + hw, cy + hw).clamped(size)


def assign_gazed_object(
    g: GazePoint,
    size: ImageSize,
    dets: Sequence[Detection],
    cfg: AssignConfig,
) -> Optional[Detection]:
    """Return the detection whose box best overlaps the gaze box.

    Ties are broken by detector confidence then list order under
    ``highest_score``, or by list order alone under ``first_index``.
    Returns None when no detection exceeds ``min_iou``.
    """
    box = gaze_box(g, size, cfg)
    best: Optional[Detection] = None
    best_iou = -1.0
    for det in dets:
        score = iou(box, det.bbox)
        if score > best_iou:
            best, best_iou = det, score
        elif (
            score == best_iou
            and best is not None
            and cfg.tie_break is TieBreak.HIGHEST_SCORE
            and det.score > best.score
        ):
            best = det
    if best is None or best_iou <= cfg.min_iou:
        return None
    return best
