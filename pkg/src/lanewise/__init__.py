"""lanewise: closed-loop vehicle self-positioning from dashcam frames.

Estimates how many lanes the road has and which one the camera vehicle
occupies, per frame, by combining lane-geometry features, a frame
classifier, lane-constrained vehicle detection, and temporal smoothing.
"""

from .classifier import LinearSvmModel, RandomForestModel, load_model, save_model
from .config import RunConfig
from .detection import (
    ContrastDetector,
    Detection,
    OracleDetector,
    detect_vehicles,
    generate_boxes,
    lane_indices,
    refine_theta1,
    select_boxes,
)
from .features import FEATURE_DIM, frame_features
from .labels import SUPPORTED_LABELS, label_index
from .lanemodel import (
    LaneModel,
    LineFit,
    OffsetParams,
    calibrate_offsets,
    detect_center_markers,
    fit_center_lines,
    marker_position,
)
from .pipeline import EvalReport, SelfPositioningPipeline, evaluate
from .preprocess import GuidedFilter, MarkerBinarizer, binarize, guided_filter
from .smoothing import SmoothingKernel, TemporalSmoother, kernel_weights, smooth_decide
from .synth import ClipSpec, SceneGeometry, generate_clip, generate_corpus

__version__ = "0.1.0"

__all__ = [
    "ContrastDetector",
    "ClipSpec",
    "Detection",
    "EvalReport",
    "FEATURE_DIM",
    "GuidedFilter",
    "LaneModel",
    "LineFit",
    "LinearSvmModel",
    "MarkerBinarizer",
    "OffsetParams",
    "OracleDetector",
    "RandomForestModel",
    "RunConfig",
    "SUPPORTED_LABELS",
    "SceneGeometry",
    "SelfPositioningPipeline",
    "SmoothingKernel",
    "TemporalSmoother",
    "binarize",
    "calibrate_offsets",
    "detect_center_markers",
    "detect_vehicles",
    "evaluate",
    "fit_center_lines",
    "frame_features",
    "generate_boxes",
    "generate_clip",
    "generate_corpus",
    "guided_filter",
    "kernel_weights",
    "label_index",
    "lane_indices",
    "load_model",
    "marker_position",
    "refine_theta1",
    "save_model",
    "select_boxes",
    "smooth_decide",
    "__version__",
]
