"""Readers and writers for every external file format.

Formats handled here:

* depth rasters: 16-bit single-channel PNG (with a units-per-count scale)
  and grayscale PFM
* annotation sets: JSONL, one sample per line
* detection files: JSON mapping sample_id to a detection array
* HHA images: 8-bit RGB PNG (R=disparity, G=height, B=angle)
* conversation records and prediction files: JSONL

Readers never raise on malformed records; they collect structured
per-record errors and keep going.  Every reader/writer pair is a lossless
round trip on valid data, and file order is preserved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from .codec import GazeRecord, Message
from .core import (
    AnnotatedSample,
    Detection,
    GazePoint,
    ImageSize,
    NormBox,
    PixelBox,
    Prediction,
    Task,
)
from .errors import FormatError, InvalidInputError
from .hha import DepthMap, HhaImage

PathLike = Union[str, Path]


@dataclass(frozen=True)
class RecordError:
    """One malformed record in an input file."""

    line: int
    message: str
    sample_id: Optional[str] = None

    def __str__(self) -> str:
        who = f" [{self.sample_id}]" if self.sample_id else ""
        return f"line {self.line}{who}: {self.message}"


@dataclass
class DetectionSet:
    """Per-image detections keyed by sample_id, in detector output order."""

    detections: dict[str, tuple[Detection, ...]] = field(default_factory=dict)
    errors: list[RecordError] = field(default_factory=list)

    def for_sample(self, sample_id: str) -> tuple[Detection, ...]:
        return self.detections.get(sample_id, ())


@dataclass
class DatasetManifest:
    """A named collection of annotated samples plus the class vocabulary."""

    name: str
    split: str
    samples: tuple[AnnotatedSample, ...]
    vocabulary: tuple[str, ...] = ()
    errors: list[RecordError] = field(default_factory=list)
    clamp_warnings: int = 0

    def __post_init__(self):
        ids = [s.sample_id for s in self.samples]
        if len(ids) != len(set(ids)):
            raise InvalidInputError("manifest sample_ids must be unique")
        if len(self.vocabulary) != len(set(self.vocabulary)):
            raise InvalidInputError("vocabulary entries must be unique")

    def sample_map(self) -> dict[str, AnnotatedSample]:
        return {s.sample_id: s for s in self.samples}


# ---------------------------------------------------------------------------
# depth rasters


def load_depth_png16(path: PathLike, scale: float = 1.0) -> DepthMap:
    """Read a 16-bit single-channel PNG; depth = raw count * scale."""
    if scale <= 0 or not np.isfinite(scale):
        raise InvalidInputError(f"scale must be positive and finite, got {scale}")
    path = Path(path)
    with Image.open(path) as img:
        if img.format != "PNG":
            raise FormatError(f"expected PNG, found {img.format}", str(path))
        if img.mode not in ("I", "I;16", "I;16B", "I;16L"):
            raise FormatError(
                f"expected 16-bit single-channel PNG, found mode {img.mode}", str(path)
            )
        raw = np.asarray(img, dtype=np.float64)
    return DepthMap(raw * scale)


def write_depth_png16(values: np.ndarray, path: PathLike, scale: float = 1.0) -> None:
    """Write depth values as a 16-bit PNG of round(depth / scale) counts."""
    if scale <= 0 or not np.isfinite(scale):
        raise InvalidInputError(f"scale must be positive and finite, got {scale}")
    counts = np.round(np.asarray(values, dtype=np.float64) / scale)
    if counts.min() < 0 or counts.max() > 0xFFFF:
        raise InvalidInputError("depth counts exceed the 16-bit range at this scale")
    Image.fromarray(counts.astype(np.uint16)).save(Path(path), format="PNG")


def load_depth_pfm(path: PathLike) -> DepthMap:
    """Read a grayscale PFM file (bottom-up rows) into a top-down DepthMap."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = _read_pfm_line(f, path)
        if magic == "PF":
            raise FormatError("color PFM ('PF') is not supported, expected grayscale 'Pf'", str(path))
        if magic != "Pf":
            raise FormatError(f"bad PFM magic {magic!r}", str(path))
        dims = _read_pfm_line(f, path).split()
        if len(dims) != 2:
            raise FormatError(f"bad PFM dimensions line {dims!r}", str(path))
        try:
            width, height = int(dims[0]), int(dims[1])
        except ValueError:
            raise FormatError(f"bad PFM dimensions line {dims!r}", str(path)) from None
        if width < 1 or height < 1:
            raise FormatError(f"bad PFM dimensions {width}x{height}", str(path))
        try:
            scale = float(_read_pfm_line(f, path))
        except ValueError:
            raise FormatError("bad PFM scale line", str(path)) from None
        if scale == 0:
            raise FormatError("PFM scale must be non-zero", str(path))
        endian = "<" if scale < 0 else ">"
        payload = f.read(4 * width * height)
        if len(payload) != 4 * width * height:
            raise FormatError(
                f"truncated PFM payload: expected {4 * width * height} bytes, got {len(payload)}",
                str(path),
            )
    values = np.frombuffer(payload, dtype=np.dtype(endian + "f4")).reshape(height, width)
    values = np.flipud(values).astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise FormatError("PFM payload contains non-finite values", str(path))
    if np.any(values < 0):
        raise FormatError("PFM payload contains negative depth values", str(path))
    return DepthMap(values)


def write_depth_pfm(values: np.ndarray, path: PathLike, little_endian: bool = True) -> None:
    """Write a grayscale PFM with bottom-up row order."""
    v = np.asarray(values, dtype=np.float32)
    if v.ndim != 2:
        raise InvalidInputError(f"PFM payload must be 2-D, got shape {v.shape}")
    height, width = v.shape
    scale = -1.0 if little_endian else 1.0
    flipped = np.flipud(v).astype("<f4" if little_endian else ">f4")
    with open(Path(path), "wb") as f:
        f.write(f"Pf\n{width} {height}\n{scale}\n".encode("ascii"))
        f.write(flipped.tobytes())


def _read_pfm_line(f, path: Path) -> str:
    buf = b""
    while True:
        c = f.read(1)
        if not c:
            raise FormatError("unexpected end of file in PFM header", str(path))
        if c == b"\n":
            return buf.decode("ascii", errors="replace").strip()
        buf += c
        if len(buf) > 128:
            raise FormatError("PFM header line too long", str(path))


# ---------------------------------------------------------------------------
# HHA images


def write_hha_png(hha: HhaImage, path: PathLike) -> None:
    """Write an 8-bit RGB PNG with R=disparity, G=height, B=angle."""
    Image.fromarray(hha.to_array(), "RGB").save(Path(path), format="PNG")


def read_hha_png(path: PathLike) -> HhaImage:
    """Read back an HHA PNG written by :func:`write_hha_png`."""
    path = Path(path)
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise FormatError(f"expected 8-bit RGB PNG, found mode {img.mode}", str(path))
        arr = np.asarray(img, dtype=np.uint8)
    h, w, _ = arr.shape
    return HhaImage(
        disparity=arr[..., 0],
        height=arr[..., 1],
        angle=arr[..., 2],
        size=ImageSize(width=w, height=h),
    )


# ---------------------------------------------------------------------------
# annotations


def load_vocabulary(path: PathLike) -> tuple[str, ...]:
    """Read a class vocabulary: one class name per line, blanks skipped."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return tuple(line.strip() for line in lines if line.strip())


def load_annotations(
    path: PathLike,
    name: Optional[str] = None,
    split: str = "test",
    vocabulary: tuple[str, ...] = (),
) -> DatasetManifest:
    """Read an annotation JSONL file into a manifest.

    Out-of-bounds head and object boxes are clamped to the image, counted
    in ``clamp_warnings``.  Malformed lines land in ``errors`` with their
    line numbers; valid lines are kept in file order.
    """
    path = Path(path)
    samples: list[AnnotatedSample] = []
    errors: list[RecordError] = []
    clamped = 0
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                sample, was_clamped = _sample_from_json(obj)
            except (InvalidInputError, KeyError, TypeError, ValueError) as exc:
                errors.append(RecordError(line_no, f"{type(exc).__name__}: {exc}"))
                continue
            if sample.sample_id in seen:
                errors.append(RecordError(line_no, "duplicate sample_id", sample.sample_id))
                continue
            seen.add(sample.sample_id)
            clamped += was_clamped
            samples.append(sample)
    return DatasetManifest(
        name=name if name is not None else path.stem,
        split=split,
        samples=tuple(samples),
        vocabulary=tuple(vocabulary),
        errors=errors,
        clamp_warnings=clamped,
    )


def _sample_from_json(obj: dict) -> tuple[AnnotatedSample, int]:
    size = ImageSize(width=int(obj["width"]), height=int(obj["height"]))
    clamped = 0

    head = PixelBox(*(float(v) for v in obj["head_box"]))
    if not head.within(size):
        head = head.clamped(size)
        clamped += 1

    gazed = None
    raw_obj = obj.get("gazed_object")
    if raw_obj is not None:
        bbox = PixelBox(*(float(v) for v in raw_obj["bbox"]))
        if not bbox.within(size):
            bbox = bbox.clamped(size)
            clamped += 1
        gazed = Detection(
            bbox=bbox,
            class_label=str(raw_obj["class"]),
            score=float(raw_obj.get("score", 1.0)),
        )

    eye = GazePoint(float(obj["eye"][0]), float(obj["eye"][1]))
    points = tuple(GazePoint(float(p[0]), float(p[1])) for p in obj.get("gaze_points", []))
    sample = AnnotatedSample(
        sample_id=str(obj["sample_id"]),
        image_path=str(obj["image"]),
        depth_path=None if obj.get("depth") is None else str(obj["depth"]),
        image_size=size,
        head_box=head,
        eye_point=eye,
        gaze_points=points,
        in_frame=bool(obj["in_frame"]),
        gazed_object=gazed,
    )
    return sample, clamped


def sample_to_json(sample: AnnotatedSample) -> dict:
    """Inverse of the annotation line schema, for writers and fixtures."""
    gazed = None
    if sample.gazed_object is not None:
        gazed = {
            "bbox": list(sample.gazed_object.bbox.as_tuple()),
            "class": sample.gazed_object.class_label,
            "score": sample.gazed_object.score,
        }
    return {
        "sample_id": sample.sample_id,
        "image": sample.image_path,
        "depth": sample.depth_path,
        "width": sample.image_size.width,
        "height": sample.image_size.height,
        "head_box": [sample.head_box.x1, sample.head_box.y1, sample.head_box.x2, sample.head_box.y2],
        "eye": [sample.eye_point.x, sample.eye_point.y],
        "gaze_points": [[p.x, p.y] for p in sample.gaze_points],
        "in_frame": sample.in_frame,
        "gazed_object": gazed,
    }


def write_annotations(samples: list[AnnotatedSample], path: PathLike) -> None:
    """Write samples as annotation JSONL, one per line."""
    with open(Path(path), "w", encoding="utf-8") as f:
        for sample in samples:
            f.write(json.dumps(sample_to_json(sample), separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# detections


def load_detections(path: PathLike, manifest: Optional[DatasetManifest] = None) -> DetectionSet:
    """Read a detection JSON file.

    When a manifest is given, boxes of known samples are clamped to their
    image bounds; detections for unknown sample_ids are kept unclamped and
    matched lazily.  Malformed entries become record-level errors.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid detection JSON: {exc}", str(path)) from None
    if not isinstance(data, dict):
        raise FormatError("detection file must be a JSON object keyed by sample_id", str(path))

    sizes = {s.sample_id: s.image_size for s in manifest.samples} if manifest else {}
    out: dict[str, tuple[Detection, ...]] = {}
    errors: list[RecordError] = []
    for sample_id, entries in data.items():
        dets: list[Detection] = []
        if not isinstance(entries, list):
            errors.append(RecordError(0, "detections must be an array", sample_id))
            continue
        for entry in entries:
            try:
                bbox = PixelBox(*(float(v) for v in entry["bbox"]))
                size = sizes.get(sample_id)
                if size is not None and not bbox.within(size):
                    bbox = bbox.clamped(size)
                dets.append(
                    Detection(bbox=bbox, class_label=str(entry["class"]), score=float(entry["score"]))
                )
            except (InvalidInputError, KeyError, TypeError, ValueError) as exc:
                errors.append(RecordError(0, f"{type(exc).__name__}: {exc}", sample_id))
        out[sample_id] = tuple(dets)
    return DetectionSet(detections=out, errors=errors)


# ---------------------------------------------------------------------------
# conversation records


def write_records(records: list[GazeRecord], path: PathLike) -> None:
    """Write conversation records as JSONL, one record per line."""
    with open(Path(path), "w", encoding="utf-8") as f:
        for record in records:
            obj = {
                "sample_id": record.sample_id,
                "task": record.task.value,
                "messages": [{"role": m.role, "content": m.content} for m in record.messages],
                "images": list(record.image_refs),
            }
            f.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")


def read_records(path: PathLike) -> tuple[list[GazeRecord], list[RecordError]]:
    """Read conversation records back; malformed lines become errors."""
    records: list[GazeRecord] = []
    errors: list[RecordError] = []
    with open(Path(path), "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    GazeRecord(
                        sample_id=str(obj["sample_id"]),
                        task=Task(obj["task"]),
                        messages=tuple(
                            Message(role=str(m["role"]), content=str(m["content"]))
                            for m in obj["messages"]
                        ),
                        image_refs=tuple(str(p) for p in obj.get("images", [])),
                    )
                )
            except (InvalidInputError, KeyError, TypeError, ValueError) as exc:
                errors.append(RecordError(line_no, f"{type(exc).__name__}: {exc}"))
    return records, errors


# ---------------------------------------------------------------------------
# predictions


def prediction_to_json(pred: Prediction) -> dict:
    return {
        "sample_id": pred.sample_id,
        "task": pred.task.value,
        "boxes": [list(b.as_tuple()) for b in pred.boxes],
        "class": pred.class_label,
        "out_of_frame": pred.out_of_frame,
        "out_score": pred.out_score,
        "raw_text": pred.raw_text,
    }


def write_predictions(preds: list[Prediction], path: PathLike) -> None:
    """Write predictions as JSONL, one per line."""
    with open(Path(path), "w", encoding="utf-8") as f:
        for pred in preds:
            f.write(json.dumps(prediction_to_json(pred), ensure_ascii=False, separators=(",", ":")) + "\n")


def read_predictions(path: PathLike) -> tuple[list[Prediction], list[RecordError]]:
    """Read a prediction JSONL file; malformed lines become errors."""
    preds: list[Prediction] = []
    errors: list[RecordError] = []
    with open(Path(path), "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            obj = None
            try:
                obj = json.loads(line)
                if "sample_id" not in obj:
                    raise KeyError("sample_id")
                preds.append(
                    Prediction(
                        sample_id=str(obj["sample_id"]),
                        task=Task(obj["task"]),
                        boxes=tuple(NormBox(*(int(v) for v in b)) for b in obj.get("boxes", [])),
                        class_label=obj.get("class"),
                        out_of_frame=bool(obj.get("out_of_frame", False)),
                        out_score=None if obj.get("out_score") is None else float(obj["out_score"]),
                        raw_text=str(obj.get("raw_text", "")),
                    )
                )
            except (InvalidInputError, KeyError, TypeError, ValueError) as exc:
                sid = obj.get("sample_id") if isinstance(obj, dict) else None
                errors.append(RecordError(line_no, f"{type(exc).__name__}: {exc}", sid))
    return preds, errors
