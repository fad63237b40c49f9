"""Reference predictors: random, center, fixed bias, and a noisy oracle.

These produce Prediction objects the same way a model would, by emitting
response text through the token grammar and parsing it back, so every
prediction has exercised the full serialization path.  Outputs are
deterministic functions of (seed, sample_id).
"""

from __future__ import annotations

import hashlib
import math
import operator
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional

import numpy as np

from .codec import PromptConfig, gaze_point_to_box, parse_response, serialize_gaze_statement
from .core import AnnotatedSample, GazePoint, NormBox, PixelBox, Prediction, Task, norm_box
from .errors import InvalidInputError

if TYPE_CHECKING:
    from .ingest import DatasetManifest


class PredictorKind(str, Enum):
    RANDOM = "random"
    CENTER = "center"
    FIXED_BIAS = "fixed_bias"
    ORACLE = "oracle"


@dataclass(frozen=True)
class PredictorSpec:
    """Which predictor to run and its parameters."""

    kind: PredictorKind
    seed: int = 0
    oracle_noise_sigma: float = 0.0
    bias_grid: int = 8

    def __post_init__(self):
        object.__setattr__(self, "kind", PredictorKind(self.kind))
        try:
            object.__setattr__(self, "seed", operator.index(self.seed))
        except TypeError:
            raise InvalidInputError("seed must be an integer") from None
        if not (self.oracle_noise_sigma >= 0 and math.isfinite(self.oracle_noise_sigma)):
            raise InvalidInputError(
                f"oracle_noise_sigma must be >= 0, got {self.oracle_noise_sigma}"
            )
        if self.bias_grid < 1:
            raise InvalidInputError(f"bias_grid must be >= 1, got {self.bias_grid}")


def _sample_rng(seed: int, sample_id: str) -> np.random.Generator:
    # stable per-sample stream: generation order cannot change outputs
    digest = hashlib.blake2b(f"{seed}|{sample_id}".encode("utf-8"), digest_size=16).digest()
    return np.random.default_rng(int.from_bytes(digest, "big"))


def _emit(
    sample: AnnotatedSample,
    point: Optional[GazePoint],
    obj: Optional[tuple[str, NormBox]],
    out_of_frame: bool,
    cfg: PromptConfig,
) -> Prediction:
    gaze_box = None if point is None else gaze_point_to_box(point, cfg)
    text = serialize_gaze_statement(gaze_box, obj, cfg, out_of_frame=out_of_frame)
    task = Task.GAZE_OBJECT if obj is not None else Task.GAZE_TARGET
    return parse_response(text, cfg, sample_id=sample.sample_id, task=task)


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float) -> float:
    while True:
        v = rng.normal(mean, sd)
        if 0.0 <= v <= 1.0:
            return float(v)


def predict_random(
    sample: AnnotatedSample, spec: PredictorSpec, cfg: PromptConfig
) -> Prediction:
    """Gaze point drawn per axis from a normal around the image center.

    The normal has mean 0.5 and standard deviation 0.25, truncated to
    [0, 1] by rejection.
    """
    rng = _sample_rng(spec.seed, sample.sample_id)
    x = _truncated_normal(rng, 0.5, 0.25)
    y = _truncated_normal(rng, 0.5, 0.25)
    return _emit(sample, GazePoint(x, y), None, False, cfg)


def predict_center(sample: AnnotatedSample, cfg: PromptConfig) -> Prediction:
    """Always the image center."""
    return _emit(sample, GazePoint(0.5, 0.5), None, False, cfg)


@dataclass(frozen=True)
class BiasTable:
    """Mean gaze point per head-center cell, with a global fallback."""

    grid: int
    cells: tuple[tuple[tuple[int, int], tuple[float, float]], ...]
    global_mean: tuple[float, float]

    def lookup(self, cell: tuple[int, int]) -> tuple[float, float]:
        for key, value in self.cells:
            if key == cell:
                return value
        return self.global_mean

    def to_json(self) -> dict:
        return {
            "grid": self.grid,
            "cells": {f"{cx},{cy}": list(mean) for (cx, cy), mean in self.cells},
            "global": list(self.global_mean),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BiasTable":
        cells = []
        for key, mean in obj["cells"].items():
            cx, cy = (int(v) for v in key.split(","))
            cells.append(((cx, cy), (float(mean[0]), float(mean[1]))))
        return cls(
            grid=int(obj["grid"]),
            cells=tuple(sorted(cells)),
            global_mean=(float(obj["global"][0]), float(obj["global"][1])),
        )


def _head_cell(sample: AnnotatedSample, grid: int) -> tuple[int, int]:
    cx, cy = sample.head_box.center()
    col = min(math.floor(cx / sample.image_size.width * grid), grid - 1)
    row = min(math.floor(cy / sample.image_size.height * grid), grid - 1)
    return max(col, 0), max(row, 0)


def fit_fixed_bias(train: "DatasetManifest", spec: PredictorSpec) -> BiasTable:
    """Learn the mean gaze point for each head-position cell."""
    sums: dict[tuple[int, int], list[float]] = {}
    total = [0.0, 0.0, 0.0]
    for sample in train.samples:
        centroid = sample.gaze_centroid()
        if centroid is None:
            continue
        cell = _head_cell(sample, spec.bias_grid)
        bucket = sums.setdefault(cell, [0.0, 0.0, 0.0])
        bucket[0] += centroid.x
        bucket[1] += centroid.y
        bucket[2] += 1.0
        total[0] += centroid.x
        total[1] += centroid.y
        total[2] += 1.0
    if total[2] == 0:
        raise InvalidInputError("fixed-bias fit requires at least one in-frame training sample")
    cells = tuple(
        sorted((cell, (sx / n, sy / n)) for cell, (sx, sy, n) in sums.items())
    )
    return BiasTable(
        grid=spec.bias_grid,
        cells=cells,
        global_mean=(total[0] / total[2], total[1] / total[2]),
    )


def predict_fixed_bias(
    sample: AnnotatedSample, table: BiasTable, cfg: PromptConfig
) -> Prediction:
    """Look up the mean gaze point for this sample's head cell."""
    x, y = table.lookup(_head_cell(sample, table.grid))
    return _emit(sample, GazePoint(x, y), None, False, cfg)


def predict_oracle(
    sample: AnnotatedSample, spec: PredictorSpec, cfg: PromptConfig
) -> Prediction:
    """Echo the ground truth, optionally blurred by Gaussian noise.

    With sigma 0 the prediction reproduces the annotation exactly; with
    sigma > 0 the gaze point and any gazed-object box are translated by
    the same noise draw, clipped to stay inside the image.
    """
    if not sample.in_frame:
        return _emit(sample, None, None, True, cfg)
    rng = _sample_rng(spec.seed, sample.sample_id)
    sigma = spec.oracle_noise_sigma
    if sigma > 0:
        ex, ey = rng.normal(0.0, sigma, size=2)
    else:
        ex = ey = 0.0
    centroid = sample.gaze_centroid()
    point = GazePoint(
        min(max(centroid.x + ex, 0.0), 1.0),
        min(max(centroid.y + ey, 0.0), 1.0),
    )
    obj = None
    if sample.gazed_object is not None:
        size = sample.image_size
        bbox = sample.gazed_object.bbox
        if sigma > 0:
            bbox = PixelBox(
                bbox.x1 + ex * size.width,
                bbox.y1 + ey * size.height,
                bbox.x2 + ex * size.width,
                bbox.y2 + ey * size.height,
            ).clamped(size)
        obj = (sample.gazed_object.class_label, norm_box(bbox, size))
    return _emit(sample, point, obj, False, cfg)


def run_predictor(
    manifest: "DatasetManifest",
    spec: PredictorSpec,
    cfg: PromptConfig,
    train: Optional["DatasetManifest"] = None,
) -> list[Prediction]:
    """Run one predictor over a whole manifest, in manifest order."""
    if spec.kind is PredictorKind.FIXED_BIAS:
        table = fit_fixed_bias(train if train is not None else manifest, spec)
        return [predict_fixed_bias(s, table, cfg) for s in manifest.samples]
    if spec.kind is PredictorKind.RANDOM:
        return [predict_random(s, spec, cfg) for s in manifest.samples]
    if spec.kind is PredictorKind.CENTER:
        return [predict_center(s, cfg) for s in manifest.samples]
    return [predict_oracle(s, spec, cfg) for s in manifest.samples]
