"""End-to-end orchestration: the per-frame closed loop and evaluation.

Each frame flows through binarization, host-line fitting (with temporal
fallback to the last good fit), feature extraction, the classifier, the
lane-constrained vehicle detector, lane-count refinement, and temporal
smoothing. Clips are independent streams; frames within a clip run in
order because the smoother is stateful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import io as lio
from .classifier import load_model
from .config import RunConfig
from .detection import (
    ContrastDetector,
    Detection,
    detect_vehicles,
    generate_boxes,
    refine_theta1,
    refinement_reweight,
    select_boxes,
)
from .exceptions import InsufficientPointsError, MissingAnnotationError
from .features import frame_features
from .labels import N_CLASSES, label_index, is_supported
from .lanemodel import (
    LaneModel,
    OffsetParams,
    TrapezoidRoi,
    detect_center_markers,
    fit_center_lines,
)
from .preprocess import binarize, guided_filter
from .smoothing import SmoothingKernel, TemporalSmoother


@dataclass
class FrameResult:
    """Everything the closed loop produced for one frame."""

    frame_idx: int
    theta_raw: tuple[int, int] | None
    theta_refined: tuple[int, int] | None
    theta_smoothed: tuple[int, int] | None
    detections: list[Detection] = field(default_factory=list)
    positioned: bool = True
    likelihood: np.ndarray | None = None  # raw classifier output, pre-reweighting

    @property
    def final(self) -> tuple[int, int] | None:
        return self.theta_smoothed


class SelfPositioningPipeline:
    """Holds the trained classifier, calibrated offsets, and all tunables."""

    def __init__(self, model, offsets: OffsetParams, config: RunConfig | None = None, detector=None):
        self.model = model
        self.offsets = offsets
        self.config = config if config is not None else RunConfig()
        self.detector = detector if detector is not None else ContrastDetector(
            margin=self.config["detection.margin"],
            uniformity_penalty=self.config["detection.uniformity_penalty"],
        )
        self._proposal_cache: dict[tuple[int, int], np.ndarray] = {}

    @classmethod
    def from_files(cls, model_path, offsets_path, config: RunConfig | None = None):
        return cls(load_model(model_path), lio.read_offsets(offsets_path), config)

    # -- per-frame geometry ------------------------------------------------

    def _roi(self, width: int, height: int) -> TrapezoidRoi:
        cfg = self.config
        return TrapezoidRoi(
            y_top=int(round(cfg["lanemodel.roi_top_frac"] * height)),
            y_bottom=height - 1,
            center_x=width / 2.0,
            half_width_top=cfg["lanemodel.roi_halfwidth_top_frac"] * width,
            half_width_bottom=cfg["lanemodel.roi_halfwidth_bottom_frac"] * width,
        )

    def fit_frame_model(self, mask: np.ndarray) -> LaneModel:
        """Fit the host lines on one binarized frame and attach the offsets.

        Raises InsufficientPointsError when either side lacks support;
        callers handle the temporal fallback.
        """
        cfg = self.config
        h, w = mask.shape
        left, right = detect_center_markers(
            mask,
            self._roi(w, h),
            area_min=cfg["lanemodel.area_min"],
            area_max=cfg["lanemodel.area_max"],
            min_elongation=cfg["lanemodel.min_elongation"],
            max_tilt_deg=cfg["lanemodel.max_tilt_deg"],
        )
        cl, cr = fit_center_lines(
            left,
            right,
            inlier_threshold=cfg["lanemodel.ransac_threshold"],
            iterations=cfg["lanemodel.ransac_iterations"],
            seed=cfg["lanemodel.ransac_seed"],
            use_ransac=cfg["lanemodel.use_ransac"],
        )
        return LaneModel(
            cl=cl,
            cr=cr,
            offsets=self.offsets,
            horizon_y=int(round(cfg["lanemodel.horizon_frac"] * h)),
            bottom_y=h - 1,
        )

    def _proposals(self, width: int, height: int) -> np.ndarray:
        key = (width, height)
        if key not in self._proposal_cache:
            cfg = self.config
            self._proposal_cache[key] = generate_boxes(
                width,
                height,
                stride=cfg["detection.stride"],
                sizes=cfg["detection.sizes"],
                max_size=cfg["detection.max_size"],
            )
        return self._proposal_cache[key]

    # -- the closed loop ---------------------------------------------------

    def process_clip(self, frames, smooth: bool | None = None, refine: bool | None = None) -> list[FrameResult]:
        """Run the closed loop over a clip's frames, in order.

        ``frames`` is an iterable of [0, 1] grayscale arrays. ``smooth`` and
        ``refine`` override the config flags. Frames with no usable lane
        model (beyond the fallback window) come back unpositioned.
        """
        cfg = self.config
        smooth = cfg["pipeline.smooth"] if smooth is None else smooth
        refine = cfg["pipeline.refine"] if refine is None else refine
        rho = cfg["pipeline.refine_rho"]
        order = cfg["pipeline.refine_order"]
        fallback_limit = cfg["pipeline.fallback_frames"]

        kernel = SmoothingKernel(
            initial_value=cfg["smoothing.initial_value"],
            rate=cfg["smoothing.rate"],
            p=cfg["smoothing.p"] if smooth else 0,
        )
        smoother = TemporalSmoother(kernel)

        results: list[FrameResult] = []
        last_model: LaneModel | None = None
        stale = 0
        for t, frame in enumerate(frames):
            filtered = guided_filter(frame, cfg["preprocess.radius"], cfg["preprocess.epsilon"])
            mask = binarize(frame, filtered, cfg["preprocess.delta"])
            try:
                model = self.fit_frame_model(mask)
                last_model = model
                stale = 0
            except InsufficientPointsError:
                stale += 1
                model = last_model if stale <= fallback_limit else None
            if model is None:
                results.append(
                    FrameResult(t, None, None, None, detections=[], positioned=False)
                )
                continue

            feats = frame_features(
                frame,
                mask,
                model,
                band_halfwidth=cfg["features.band_halfwidth"],
                step=cfg["features.step"],
            )
            likelihood = self.model.predict_proba(feats)[0]
            raw_idx = int(np.argmax(likelihood))
            theta_raw = tuple(int(v) for v in self.model.classes_[raw_idx])

            detections: list[Detection] = []
            theta_refined = theta_raw
            if refine:
                survivors = select_boxes(
                    self._proposals(frame.shape[1], frame.shape[0]),
                    model,
                    t_lo=cfg["detection.t_lo"],
                    t_hi=cfg["detection.t_hi"],
                )
                detections = detect_vehicles(
                    frame,
                    survivors,
                    self.detector,
                    cfg["detection.score_threshold"],
                    model,
                    nms_iou=cfg["detection.nms_iou"],
                )
                theta_refined = refine_theta1(theta_raw, detections)

            buffered = likelihood
            if refine and order == "pre" and theta_refined[0] != theta_raw[0]:
                buffered = refinement_reweight(likelihood, theta_refined[0], rho)

            if smooth:
                theta_smoothed, _ = smoother.update(buffered)
                if refine and order == "post":
                    theta_smoothed = refine_theta1(theta_smoothed, detections)
            else:
                theta_smoothed = theta_refined

            results.append(
                FrameResult(
                    t, theta_raw, theta_refined, theta_smoothed, detections,
                    likelihood=likelihood,
                )
            )
        return results


# ---------------------------------------------------------------------------
# likelihood-stream fusion (shared by the smoothing-benefit analysis)


def fuse_stream(likelihoods, kernel: SmoothingKernel):
    """Smoothed label per frame for a standalone likelihood sequence."""
    smoother = TemporalSmoother(kernel)
    return [smoother.update(vec)[0] for vec in likelihoods]


def argmax_stream(likelihoods):
    """Per-frame argmax labels (the unsmoothed baseline)."""
    from .labels import label_of_index

    return [label_of_index(int(np.argmax(vec))) for vec in likelihoods]


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    """Frame-level accuracy summary across the eight classes."""

    confusion: np.ndarray  # (8, 8) true x predicted frame counts
    unpositioned: np.ndarray  # per-true-class frames with no valid prediction
    per_class: np.ndarray  # (8,) accuracy per true class
    overall: float
    total: int

    def format(self) -> str:
        from .labels import SUPPORTED_LABELS

        lines = ["class    frames  accuracy"]
        for c, (t1, t2) in enumerate(SUPPORTED_LABELS):
            n = int(self.confusion[c].sum() + self.unpositioned[c])
            acc = f"{self.per_class[c]:.4f}" if n else "   n/a"
            lines.append(f"[{t1},{t2}]    {n:5d}    {acc}")
        lines.append(f"overall  {self.total:5d}    {self.overall:.4f}")
        lines.append("")
        lines.append("confusion matrix (rows true, cols predicted):")
        header = "        " + " ".join(f"[{a},{b}]" for a, b in SUPPORTED_LABELS)
        lines.append(header)
        for c, (t1, t2) in enumerate(SUPPORTED_LABELS):
            row = " ".join(f"{int(v):5d}" for v in self.confusion[c])
            lines.append(f"[{t1},{t2}] {row}")
        if self.unpositioned.sum():
            lines.append(f"unpositioned frames: {int(self.unpositioned.sum())}")
        return "\n".join(lines)


def evaluate(predictions, annotations: dict[str, tuple[int, int]]) -> EvalReport:
    """Score per-frame predictions against per-clip labels.

    ``predictions`` holds (clip_id, frame_idx, theta) rows where theta may
    be None or an out-of-set pair for unpositioned frames. Every predicted
    clip must be annotated; a missing clip raises MissingAnnotationError
    naming the frame.
    """
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    unpositioned = np.zeros(N_CLASSES, dtype=np.int64)
    for clip_id, frame_idx, theta in predictions:
        if clip_id not in annotations:
            raise MissingAnnotationError(
                f"no annotation for clip {clip_id!r} (frame {frame_idx})"
            )
        true_c = label_index(annotations[clip_id])
        if theta is not None and is_supported(theta):
            confusion[true_c, label_index(theta)] += 1
        else:
            unpositioned[true_c] += 1
    row_totals = confusion.sum(axis=1) + unpositioned
    with np.errstate(divide="ignore", invalid="ignore"):
        per_class = np.where(row_totals > 0, np.diag(confusion) / np.maximum(row_totals, 1), 0.0)
    total = int(row_totals.sum())
    overall = float(np.trace(confusion) / total) if total else 0.0
    return EvalReport(
        confusion=confusion,
        unpositioned=unpositioned,
        per_class=per_class,
        overall=overall,
        total=total,
    )
