"""Evaluation metrics: AUC, distances, angular error, AP variants.

Point predictions are scored four ways on in-frame samples (heatmap AUC,
distance to the mean annotation, minimum distance to any annotation,
angular error about the eye), plus ranking AP for out-of-frame decisions
and a per-class detection AP for gazed objects.  Per-sample terms are
accumulated associatively so sharded evaluation merges exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .assign import iou
from .core import AnnotatedSample, GazePoint, NormBox, PixelBox, Prediction, norm_box
from .errors import InvalidInputError, UndefinedMetricError

if TYPE_CHECKING:
    from .ingest import DatasetManifest


@dataclass(frozen=True)
class MetricConfig:
    """Evaluation parameters.

    ``ap_interpolation`` and ``auc_tie_rule`` name the only supported
    schemes; they are carried so reports can state them explicitly.
    """

    heatmap_grid: int = 64
    heatmap_sigma: float = 3.0
    iou_threshold: float = 0.5
    ap_interpolation: str = "all_points"
    auc_tie_rule: str = "average_rank"

    def __post_init__(self):
        if self.heatmap_grid < 8:
            raise InvalidInputError(f"heatmap_grid must be >= 8, got {self.heatmap_grid}")
        if not (self.heatmap_sigma > 0):
            raise InvalidInputError(f"heatmap_sigma must be positive, got {self.heatmap_sigma}")
        if not (0.0 < self.iou_threshold < 1.0):
            raise InvalidInputError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")
        if self.ap_interpolation != "all_points":
            raise InvalidInputError(f"unsupported ap_interpolation {self.ap_interpolation!r}")
        if self.auc_tie_rule != "average_rank":
            raise InvalidInputError(f"unsupported auc_tie_rule {self.auc_tie_rule!r}")


@dataclass
class MetricReport:
    """Aggregated evaluation results; absent metrics are None."""

    auc: Optional[float] = None
    dist: Optional[float] = None
    min_dist: Optional[float] = None
    angle_deg: Optional[float] = None
    ap_inout: Optional[float] = None
    ap_ob: Optional[float] = None
    per_class_ap: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "auc": self.auc,
            "dist": self.dist,
            "min_dist": self.min_dist,
            "angle_deg": self.angle_deg,
            "ap_inout": self.ap_inout,
            "ap_ob": self.ap_ob,
            "per_class_ap": dict(sorted(self.per_class_ap.items())),
            "counts": dict(self.counts),
            "errors": list(self.errors),
        }


# ---------------------------------------------------------------------------
# heatmap and AUC


def build_pred_heatmap(p: GazePoint, cfg: MetricConfig) -> np.ndarray:
    """Gaussian bump of width sigma centered on the predicted cell."""
    g = cfg.heatmap_grid
    ys = np.arange(g, dtype=np.float64)[:, None]
    xs = np.arange(g, dtype=np.float64)[None, :]
    dx = xs - p.x * g
    dy = ys - p.y * g
    return np.exp(-(dx * dx + dy * dy) / (2.0 * cfg.heatmap_sigma**2))


def _gt_cells(gt_points: Sequence[GazePoint], height: int, width: int) -> set[tuple[int, int]]:
    cells = set()
    for p in gt_points:
        col = min(math.floor(p.x * width), width - 1)
        row = min(math.floor(p.y * height), height - 1)
        cells.add((row, col))
    return cells


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """Ranks 1..n with equal scores sharing their average rank."""
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    n = len(s)
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], n]
    averaged = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = averaged
    return ranks


def auc(heatmap: np.ndarray, gt_points: Sequence[GazePoint]) -> float:
    """Rank-based ROC area of heatmap cells against binarized gaze cells.

    Cells containing any ground-truth point are positive; ties in the
    heatmap share average ranks, so a constant map scores exactly 0.5.
    """
    if not gt_points:
        raise InvalidInputError("auc requires at least one ground-truth point")
    hm = np.asarray(heatmap, dtype=np.float64)
    if hm.ndim != 2:
        raise InvalidInputError(f"heatmap must be 2-D, got shape {hm.shape}")
    if not np.all(np.isfinite(hm)):
        raise InvalidInputError("heatmap must be finite")
    height, width = hm.shape
    positives = _gt_cells(gt_points, height, width)
    n = hm.size
    n_pos = len(positives)
    if n_pos == 0 or n_pos == n:
        raise UndefinedMetricError("auc needs both positive and negative cells")
    labels = np.zeros((height, width), dtype=bool)
    for row, col in positives:
        labels[row, col] = True
    ranks = _average_ranks(hm.ravel())
    pos_rank_sum = float(ranks[labels.ravel()].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * (n - n_pos))


# ---------------------------------------------------------------------------
# distances and angle


def l2_dist(pred: GazePoint, gt: GazePoint) -> float:
    """Euclidean distance in normalized coordinates."""
    return math.hypot(pred.x - gt.x, pred.y - gt.y)


def min_dist(pred: GazePoint, gts: Sequence[GazePoint]) -> float:
    """Distance to the nearest of the annotated gaze points."""
    if not gts:
        raise InvalidInputError("min_dist requires at least one ground-truth point")
    return min(l2_dist(pred, g) for g in gts)


def angle_error(eye: GazePoint, pred: GazePoint, gt: GazePoint) -> float:
    """Angle in degrees between the predicted and true gaze vectors.

    Computed from the cross and dot products, which is exact at 0, 90 and
    180 degrees and invariant under positive scaling of either vector.
    """
    px, py = pred.x - eye.x, pred.y - eye.y
    gx, gy = gt.x - eye.x, gt.y - eye.y
    if (px == 0.0 and py == 0.0) or (gx == 0.0 and gy == 0.0):
        raise UndefinedMetricError("gaze vector has zero length")
    cross = px * gy - py * gx
    dot = px * gx + py * gy
    return math.degrees(math.atan2(abs(cross), dot))


# ---------------------------------------------------------------------------
# average precision


def ap_inout(items: Sequence[tuple[float, bool]]) -> float:
    """AP of ranking out-of-frame samples by predicted out score.

    Ties rank positives after negatives (pessimistic), so binary scores
    still yield a deterministic value.
    """
    n_pos = sum(1 for _, is_out in items if is_out)
    if n_pos == 0:
        raise UndefinedMetricError("ap_inout requires at least one out-of-frame sample")
    ranked = sorted(items, key=lambda item: (-item[0], item[1]))
    hits = 0
    precision_sum = 0.0
    for rank, (_, is_out) in enumerate(ranked, start=1):
        if is_out:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / n_pos


def _bin_box(b: NormBox) -> PixelBox:
    # bins are unit cells, so the closed bin range [x1, x2] spans x2 - x1 + 1
    return PixelBox(b.x1, b.y1, b.x2 + 1, b.y2 + 1)


def bin_iou(a: NormBox, b: NormBox) -> float:
    """IoU of two bin-grid boxes, counting each bin as a unit cell."""
    return iou(_bin_box(a), _bin_box(b))


def ap_ob(
    preds: Sequence[Prediction],
    gts: Sequence[AnnotatedSample],
    vocab: Sequence[str],
    cfg: MetricConfig,
) -> tuple[dict[str, float], Optional[float]]:
    """Per-class AP for gazed-object predictions, and the mean over classes.

    A prediction is a true positive when its class matches its sample's
    gazed-object class and the bin-space IoU strictly exceeds the
    threshold; each ground truth matches at most once.  Classes with no
    ground-truth instance are excluded from the mean.
    """
    gt_by_sample = {s.sample_id: s for s in gts}
    gt_classes: dict[str, int] = {}
    for s in gts:
        if s.gazed_object is not None:
            gt_classes[s.gazed_object.class_label] = gt_classes.get(s.gazed_object.class_label, 0) + 1

    classes = [c for c in vocab if gt_classes.get(c, 0) > 0] if vocab else sorted(gt_classes)
    by_class: dict[str, list[Prediction]] = {c: [] for c in classes}
    for pred in preds:
        if pred.class_label in by_class and pred.object_box() is not None:
            by_class[pred.class_label].append(pred)

    per_class: dict[str, float] = {}
    for cls in classes:
        n_gt = gt_classes[cls]
        # canonical order makes the greedy match permutation invariant
        ranked = sorted(by_class[cls], key=lambda p: (p.sample_id, p.object_box().as_tuple()))
        matched: set[str] = set()
        hits = 0
        precision_sum = 0.0
        for rank, pred in enumerate(ranked, start=1):
            sample = gt_by_sample.get(pred.sample_id)
            gt_obj = sample.gazed_object if sample is not None else None
            is_tp = (
                gt_obj is not None
                and gt_obj.class_label == cls
                and pred.sample_id not in matched
                and bin_iou(pred.object_box(), _norm_gt_box(sample)) > cfg.iou_threshold
            )
            if is_tp:
                matched.add(pred.sample_id)
                hits += 1
                precision_sum += hits / rank
        per_class[cls] = precision_sum / n_gt
    mean = sum(per_class.values()) / len(per_class) if per_class else None
    return per_class, mean


def _norm_gt_box(sample: AnnotatedSample) -> NormBox:
    return norm_box(sample.gazed_object.bbox, sample.image_size)


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class MetricAccumulator:
    """Associative partial state; merge order never changes the report."""

    auc_sum: float = 0.0
    auc_n: int = 0
    dist_sum: float = 0.0
    dist_n: int = 0
    min_dist_sum: float = 0.0
    min_dist_n: int = 0
    angle_sum: float = 0.0
    angle_n: int = 0
    inout_items: list[tuple[float, bool]] = field(default_factory=list)
    ob_preds: list[Prediction] = field(default_factory=list)
    ob_samples: list[AnnotatedSample] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    def bump(self, key: str, by: int = 1) -> None:
        self.counts[key] = self.counts.get(key, 0) + by

    def merge(self, other: "MetricAccumulator") -> "MetricAccumulator":
        out = MetricAccumulator(
            auc_sum=self.auc_sum + other.auc_sum,
            auc_n=self.auc_n + other.auc_n,
            dist_sum=self.dist_sum + other.dist_sum,
            dist_n=self.dist_n + other.dist_n,
            min_dist_sum=self.min_dist_sum + other.min_dist_sum,
            min_dist_n=self.min_dist_n + other.min_dist_n,
            angle_sum=self.angle_sum + other.angle_sum,
            angle_n=self.angle_n + other.angle_n,
            inout_items=self.inout_items + other.inout_items,
            ob_preds=self.ob_preds + other.ob_preds,
            ob_samples=self.ob_samples + other.ob_samples,
            counts=dict(self.counts),
            errors=self.errors + other.errors,
        )
        for key, value in other.counts.items():
            out.counts[key] = out.counts.get(key, 0) + value
        return out


def accumulate_sample(
    sample: AnnotatedSample, pred: Optional[Prediction], cfg: MetricConfig
) -> MetricAccumulator:
    """Metric terms contributed by a single sample."""
    acc = MetricAccumulator()
    acc.bump("samples")
    acc.bump("in_frame" if sample.in_frame else "out_frame")
    acc.ob_samples.append(sample)
    if pred is None:
        return acc
    acc.bump("predictions")

    out_score = pred.out_score
    if out_score is None:
        out_score = 1.0 if pred.out_of_frame else 0.0
    acc.inout_items.append((out_score, not sample.in_frame))
    acc.ob_preds.append(pred)

    if not sample.in_frame or pred.out_of_frame:
        return acc
    point = pred.gaze_point()
    if point is None:
        acc.bump("missing_gaze_box")
        return acc

    centroid = sample.gaze_centroid()
    acc.dist_sum += l2_dist(point, centroid)
    acc.dist_n += 1
    acc.min_dist_sum += min_dist(point, sample.gaze_points)
    acc.min_dist_n += 1
    try:
        acc.auc_sum += auc(build_pred_heatmap(point, cfg), sample.gaze_points)
        acc.auc_n += 1
    except UndefinedMetricError:
        acc.bump("undefined_auc")
    try:
        acc.angle_sum += angle_error(sample.eye_point, point, centroid)
        acc.angle_n += 1
    except UndefinedMetricError:
        acc.bump("undefined_angle")
    return acc


def evaluate(
    preds: Sequence[Prediction],
    manifest: "DatasetManifest",
    cfg: MetricConfig,
) -> MetricReport:
    """Score predictions against a manifest and aggregate a report.

    Unknown sample_ids are reported and skipped; duplicate predictions for
    a sample keep the first.  All aggregates are unweighted means over the
    samples where the metric is defined.
    """
    by_sample: dict[str, Prediction] = {}
    acc = MetricAccumulator()
    known = {s.sample_id for s in manifest.samples}
    for pred in preds:
        if pred.sample_id not in known:
            acc.errors.append(f"unknown sample_id {pred.sample_id!r}")
            acc.bump("unknown_sample_ids")
        elif pred.sample_id not in by_sample:
            by_sample[pred.sample_id] = pred
        else:
            acc.bump("duplicate_predictions")

    for sample in manifest.samples:
        acc = acc.merge(accumulate_sample(sample, by_sample.get(sample.sample_id), cfg))
    return finalize(acc, tuple(manifest.vocabulary), cfg)


def finalize(acc: MetricAccumulator, vocab: Sequence[str], cfg: MetricConfig) -> MetricReport:
    """Turn accumulated partial state into a report."""
    report = MetricReport(counts=dict(acc.counts), errors=list(acc.errors))
    if acc.auc_n:
        report.auc = acc.auc_sum / acc.auc_n
    if acc.dist_n:
        report.dist = acc.dist_sum / acc.dist_n
    if acc.min_dist_n:
        report.min_dist = acc.min_dist_sum / acc.min_dist_n
    if acc.angle_n:
        report.angle_deg = acc.angle_sum / acc.angle_n
    try:
        report.ap_inout = ap_inout(acc.inout_items) if acc.inout_items else None
    except UndefinedMetricError:
        report.ap_inout = None
    per_class, mean = ap_ob(acc.ob_preds, acc.ob_samples, vocab, cfg)
    report.per_class_ap = per_class
    report.ap_ob = mean
    return report


# ---------------------------------------------------------------------------
# report rendering

_COLUMNS = ("AUC", "Dist.", "M. Dist.", "Angle", "AP", "AP_ob")


def _cell(value: Optional[float], digits: int = 3) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def format_report_table(report: MetricReport, label: str = "") -> str:
    """Aligned one-row table in the standard column order."""
    values = (
        _cell(report.auc),
        _cell(report.dist),
        _cell(report.min_dist),
        _cell(report.angle_deg, 1),
        _cell(report.ap_inout),
        _cell(report.ap_ob),
    )
    name_w = max(len(label), len("run")) if label else 0
    header_cells = list(_COLUMNS)
    row_cells = list(values)
    widths = [max(len(h), len(v)) for h, v in zip(header_cells, row_cells)]
    header = "  ".join(h.rjust(w) for h, w in zip(header_cells, widths))
    row = "  ".join(v.rjust(w) for v, w in zip(row_cells, widths))
    if label:
        header = "run".ljust(name_w) + "  " + header
        row = label.ljust(name_w) + "  " + row
    return header + "\n" + row


def format_report_csv(rows: Sequence[tuple[str, str, MetricReport]]) -> str:
    """CSV with one row per (dataset, predictor) pair."""
    lines = ["dataset,predictor,auc,dist,min_dist,angle_deg,ap_inout,ap_ob"]
    for dataset, predictor, report in rows:
        cells = [dataset, predictor] + [
            "" if v is None else repr(v)
            for v in (
                report.auc,
                report.dist,
                report.min_dist,
                report.angle_deg,
                report.ap_inout,
                report.ap_ob,
            )
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
