"""Uncertainty-aware multi-source detection fusion.

Detections carry per-coordinate Gaussian variances; fusion pools two
modalities (RGB and depth rasters), suppresses duplicates with
score decay, and replaces each kept box with an inverse-variance
weighted average of the boxes that agree with it. The package also
ships the surrounding pipeline: point-cloud projection, seeded raster
corruptions, a synthetic detector simulator, mAP evaluation, and
calibration diagnostics, all behind the ``fuselage`` CLI.
"""

from .corruption import CorruptionKind, CorruptionSpec, corrupt, severity_ladder
from .errors import (
    CalibrationError,
    FormatError,
    FuselageError,
    InsufficientDataError,
    ParseError,
    TruncationError,
)
from .evaluation import (
    RECALL_GRID,
    ClassEval,
    EvalReport,
    GroundTruthFrame,
    average_precision,
    evaluate_detections,
    match_detections,
)
from .formats import (
    DetectionRecord,
    group_detections,
    read_calib,
    read_detections,
    read_kitti_labels,
    read_pgm,
    read_ppm,
    read_raster,
    read_velodyne,
    write_detections,
    write_pgm,
    write_ppm,
    write_raster,
)
from .geometry import (
    CLASS_NAMES,
    CornerBox,
    GaussianBox,
    Modality,
    from_corners,
    iou,
    iou_matrix,
    to_corners,
)
from .nms import (
    Decay,
    DetectionSet,
    FusionConfig,
    OverlapCase,
    classify_overlap,
    decay,
    multi_source_nms,
    softer_update,
    standard_nms,
)
from .nms_oracle import oracle_multi_source_nms
from .projection import (
    CalibMatrices,
    PointCloud,
    camera_point,
    normalize_raster,
    project_points,
)
from .raster import Raster
from .simulate import (
    NoiseResponse,
    SimDetectorSpec,
    corpus_from_jsonl,
    corpus_to_jsonl,
    default_depth_spec,
    default_rgb_spec,
    load_golden_corpus,
    make_synthetic_corpus,
    simulate_detections,
)
from .degradation import (
    GridCell,
    avg_fusion,
    grid_to_csv_rows,
    run_degradation_grid,
    write_grid_csv,
)
from .uncertainty import (
    CalibrationCurve,
    CorrelationStats,
    LossBatch,
    LossSample,
    attenuated_loss,
    attenuated_loss_grad,
    correlation_from_triples,
    correlation_stats,
    detection_triples,
    ece_curve,
    nll_loss,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "FuselageError", "ParseError", "FormatError", "TruncationError",
    "CalibrationError", "InsufficientDataError",
    # geometry
    "CLASS_NAMES", "Modality", "GaussianBox", "CornerBox",
    "to_corners", "from_corners", "iou", "iou_matrix",
    # fusion
    "Decay", "OverlapCase", "FusionConfig", "DetectionSet",
    "decay", "classify_overlap", "softer_update", "standard_nms",
    "multi_source_nms", "oracle_multi_source_nms",
    # uncertainty
    "LossSample", "LossBatch", "CalibrationCurve", "CorrelationStats",
    "attenuated_loss", "attenuated_loss_grad", "nll_loss", "ece_curve",
    "detection_triples", "correlation_from_triples", "correlation_stats",
    # projection
    "Raster", "PointCloud", "CalibMatrices",
    "project_points", "camera_point", "normalize_raster",
    # corruption
    "CorruptionKind", "CorruptionSpec", "corrupt", "severity_ladder",
    # evaluation
    "GroundTruthFrame", "ClassEval", "EvalReport", "RECALL_GRID",
    "match_detections", "average_precision", "evaluate_detections",
    # simulation + degradation grid
    "NoiseResponse", "SimDetectorSpec", "simulate_detections",
    "default_rgb_spec", "default_depth_spec",
    "make_synthetic_corpus", "corpus_to_jsonl", "corpus_from_jsonl",
    "load_golden_corpus",
    "GridCell", "avg_fusion", "run_degradation_grid",
    "grid_to_csv_rows", "write_grid_csv",
    # io
    "DetectionRecord", "read_detections", "write_detections",
    "group_detections", "read_kitti_labels", "read_velodyne", "read_calib",
    "read_pgm", "write_pgm", "read_ppm", "write_ppm",
    "read_raster", "write_raster",
]
