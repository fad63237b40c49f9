"""Gaze understanding toolkit.

Depth-to-HHA encoding, tokenized conversation records for gaze tasks,
gazed-object assignment, baseline predictors, and evaluation metrics,
with a command-line front end (``gazekit``).
"""

__version__ = "0.1.0"

from .assign import AssignConfig, TieBreak, assign_gazed_object, gaze_box, iou
from .codec import (
    GazeRecord,
    Message,
    PromptConfig,
    build_record,
    gaze_point_to_box,
    parse_response,
    serialize_box,
    serialize_gaze_statement,
    serialize_object_ref,
)
from .core import (
    NORM_BINS,
    AnnotatedSample,
    Detection,
    GazePoint,
    ImageSize,
    NormBox,
    PixelBox,
    Prediction,
    Task,
    denorm_box,
    denorm_coord,
    norm_box,
    norm_coord,
)
from .errors import (
    FormatError,
    GazekitError,
    InvalidInputError,
    MalformedResponseError,
    UndefinedMetricError,
)
from .hha import DepthMap, HhaConfig, HhaImage, encode_hha, sobel_gradients
from .ingest import (
    DatasetManifest,
    DetectionSet,
    RecordError,
    load_annotations,
    load_depth_pfm,
    load_depth_png16,
    load_detections,
    load_vocabulary,
    read_hha_png,
    read_predictions,
    read_records,
    write_annotations,
    write_depth_pfm,
    write_depth_png16,
    write_hha_png,
    write_predictions,
    write_records,
)
from .metrics import (
    MetricAccumulator,
    MetricConfig,
    MetricReport,
    accumulate_sample,
    angle_error,
    ap_inout,
    ap_ob,
    auc,
    bin_iou,
    build_pred_heatmap,
    evaluate,
    finalize,
    format_report_csv,
    format_report_table,
    l2_dist,
    min_dist,
)
from .predictors import (
    BiasTable,
    PredictorKind,
    PredictorSpec,
    fit_fixed_bias,
    predict_center,
    predict_fixed_bias,
    predict_oracle,
    predict_random,
    run_predictor,
)

__all__ = [
    "__version__",
    "NORM_BINS",
    "AnnotatedSample",
    "AssignConfig",
    "BiasTable",
    "DatasetManifest",
    "DepthMap",
    "Detection",
    "DetectionSet",
    "FormatError",
    "GazePoint",
    "GazeRecord",
    "GazekitError",
    "HhaConfig",
    "HhaImage",
    "ImageSize",
    "InvalidInputError",
    "MalformedResponseError",
    "Message",
    "MetricAccumulator",
    "MetricConfig",
    "MetricReport",
    "NormBox",
    "PixelBox",
    "Prediction",
    "PredictorKind",
    "PredictorSpec",
    "PromptConfig",
    "RecordError",
    "Task",
    "TieBreak",
    "UndefinedMetricError",
    "accumulate_sample",
    "angle_error",
    "ap_inout",
    "ap_ob",
    "assign_gazed_object",
    "auc",
    "bin_iou",
    "build_pred_heatmap",
    "build_record",
    "denorm_box",
    "denorm_coord",
    "encode_hha",
    "evaluate",
    "finalize",
    "fit_fixed_bias",
    "format_report_csv",
    "format_report_table",
    "gaze_box",
    "gaze_point_to_box",
    "iou",
    "l2_dist",
    "load_annotations",
    "load_depth_pfm",
    "load_depth_png16",
    "load_detections",
    "load_vocabulary",
    "min_dist",
    "norm_box",
    "norm_coord",
    "parse_response",
    "predict_center",
    "predict_fixed_bias",
    "predict_oracle",
    "predict_random",
    "read_hha_png",
    "read_predictions",
    "read_records",
    "run_predictor",
    "serialize_box",
    "serialize_gaze_statement",
    "serialize_object_ref",
    "sobel_gradients",
    "write_annotations",
    "write_depth_pfm",
    "write_depth_png16",
    "write_hha_png",
    "write_predictions",
    "write_records",
]
