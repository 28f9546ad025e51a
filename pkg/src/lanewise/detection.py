"""Lane-constrained vehicle proposals, detection, and lane-count refinement.

Candidate boxes are generated exhaustively on a stride grid, then pruned by
requiring the lower-edge width to be commensurate with the local lane span.
Surviving boxes are scored by a pluggable detector, non-maximum suppressed,
and assigned a lane slot on the same 1..8 marker index line used by
:func:`lane_indices`; out-of-set slots widen the lane-count estimate.

Boxes are half-open pixel rectangles [x_min, x_max) x [y_min, y_max) stored
as (n, 4) arrays in x_min, y_min, x_max, y_max order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import UnsupportedLabelError
from .labels import is_supported
from .lanemodel import LaneModel

DEFAULT_STRIDE = 8
DEFAULT_SIZES = (24, 32, 48, 64, 96)
DEFAULT_MAX_SIZE = 96
DEFAULT_SPAN_LO = 0.3
DEFAULT_SPAN_HI = 1.1
MIN_ASPECT = 1 / 3
MAX_ASPECT = 3.0


@dataclass(frozen=True)
class Detection:
    """A scored vehicle box with its lane slot on the marker index line."""

    box: tuple[int, int, int, int]
    score: float
    lane_slot: int


def lane_indices(theta) -> set[int]:
    """Marker indices implied by a label: {5 - theta2, ..., 5 + theta1 - theta2}.

    The host lane always sits between markers 4 and 5, with theta2 - 1
    lanes to its left, so the set is contiguous with theta1 + 1 members.
    """
    if not is_supported(theta):
        raise UnsupportedLabelError(f"label {tuple(int(v) for v in theta)} unsupported")
    t1, t2 = int(theta[0]), int(theta[1])
    return set(range(5 - t2, 5 + (t1 - t2) + 1))


# ---------------------------------------------------------------------------
# proposal generation and selection


def box_dimensions(
    sizes=DEFAULT_SIZES,
    max_size: int = DEFAULT_MAX_SIZE,
) -> list[tuple[int, int]]:
    """(width, height) pairs with both sides drawn from the size set.

    Pairs whose aspect ratio leaves [1/3, 3] or whose sides exceed
    ``max_size`` are dropped. Sorted and deduplicated.
    """
    dims = set()
    for w in sizes:
        for h in sizes:
            if w < 1 or h < 1 or w > max_size or h > max_size:
                continue
            if MIN_ASPECT <= w / h <= MAX_ASPECT:
                dims.add((int(w), int(h)))
    return sorted(dims)


def generate_boxes(
    width: int,
    height: int,
    stride: int = DEFAULT_STRIDE,
    sizes=DEFAULT_SIZES,
    max_size: int = DEFAULT_MAX_SIZE,
) -> np.ndarray:
    """Exhaustive grid-aligned proposals for a frame.

    Corners lie on the stride grid, boxes stay inside the frame, and only
    the lower two thirds of the image is covered (y_min >= height / 3).
    """
    out = []
    # smallest stride multiple with 3 * y >= height, in exact integer math
    k_min = -(-height // (3 * stride))
    for w, h in box_dimensions(sizes, max_size):
        xs = np.arange(0, width - w + 1, stride, dtype=np.int64)
        ys = np.arange(k_min * stride, height - h + 1, stride, dtype=np.int64)
        if xs.size == 0 or ys.size == 0:
            continue
        gx, gy = np.meshgrid(xs, ys)
        boxes = np.column_stack([gx.ravel(), gy.ravel(), gx.ravel() + w, gy.ravel() + h])
        out.append(boxes)
    if not out:
        return np.zeros((0, 4), dtype=np.int64)
    return np.concatenate(out)


def _lane_regions(boxes: np.ndarray, model: LaneModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-box lane region (1..7 between markers k, k+1; 0 = none) and span.

    A box belongs to the region containing its lower-edge midpoint at row
    y_max; boxes whose y_max leaves the model band get region 0.
    """
    n = boxes.shape[0]
    region = np.zeros(n, dtype=np.int64)
    span = np.zeros(n, dtype=np.float64)
    if n == 0:
        return region, span
    y = boxes[:, 3].astype(np.float64)
    in_band = (y >= model.horizon_y) & (y <= model.bottom_y)
    if not in_band.any():
        return region, span
    xs = model.marker_matrix(y[in_band])
    mid = (boxes[in_band, 0] + boxes[in_band, 2]) / 2.0
    # count markers at or left of the midpoint; 1..7 means inside the fan
    k = (mid[:, None] >= xs).sum(axis=1)
    inside = (k >= 1) & (k <= 7)
    rows = np.nonzero(in_band)[0]
    kk = k[inside]
    region[rows[inside]] = kk
    span[rows[inside]] = xs[inside, kk] - xs[inside, kk - 1]
    return region, span


def select_boxes(
    boxes: np.ndarray,
    model: LaneModel,
    t_lo: float = DEFAULT_SPAN_LO,
    t_hi: float = DEFAULT_SPAN_HI,
) -> np.ndarray:
    """Keep boxes whose lower-edge width matches the local lane span.

    A box survives when its lower-edge midpoint falls inside one of the
    seven lane regions at y_max and width / span(region) lies in
    [t_lo, t_hi]. Everything else, including boxes below or above the
    model band, is dropped.
    """
    boxes = np.asarray(boxes).reshape(-1, 4)
    region, span = _lane_regions(boxes, model)
    widths = (boxes[:, 2] - boxes[:, 0]).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(span > 0, widths / np.maximum(span, 1e-12), np.inf)
    keep = (region > 0) & (ratio >= t_lo) & (ratio <= t_hi)
    return boxes[keep]


def region_to_slot(region: int) -> int:
    """Map a lane region (1..7) to the marker-index-line slot used by Eq.-style refinement.

    Regions left of the host take their left (outer) marker index, regions
    right of it their right (outer) marker index; the host region maps to 4.
    """
    if region <= 4:
        return int(region)
    return int(region) + 1


def lane_slot_of(box, model: LaneModel) -> int | None:
    """Lane slot of a single box, or None when it sits outside the lane fan."""
    region, _ = _lane_regions(np.asarray(box).reshape(1, 4), model)
    if region[0] == 0:
        return None
    return region_to_slot(int(region[0]))


# ---------------------------------------------------------------------------
# scoring and suppression


def box_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (n, 4) / (m, 4) box sets."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    x0 = np.maximum(a[:, None, 0], b[None, :, 0])
    y0 = np.maximum(a[:, None, 1], b[None, :, 1])
    x1 = np.minimum(a[:, None, 2], b[None, :, 2])
    y1 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(x1 - x0, 0, None) * np.clip(y1 - y0, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


def nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float = 0.5) -> np.ndarray:
    """Greedy non-maximum suppression; returns kept indices, best first.

    Score ties break toward the lower index, so the result is deterministic.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    order = np.argsort(-scores, kind="stable")
    keep = []
    while order.size:
        i = order[0]
        keep.append(int(i))
        if order.size == 1:
            break
        rest = order[1:]
        ious = box_iou(boxes[i], boxes[rest])[0]
        order = rest[ious <= iou_threshold]
    return np.array(keep, dtype=np.int64)


class OracleDetector:
    """Scores 1.0 on boxes overlapping a ground-truth box, 0.0 elsewhere."""

    def __init__(self, truth_boxes, min_iou: float = 0.5):
        self.truth_boxes = np.asarray(truth_boxes, dtype=np.float64).reshape(-1, 4)
        self.min_iou = min_iou

    def score(self, frame: np.ndarray, boxes: np.ndarray) -> np.ndarray:
        boxes = np.asarray(boxes).reshape(-1, 4)
        if self.truth_boxes.shape[0] == 0 or boxes.shape[0] == 0:
            return np.zeros(boxes.shape[0])
        ious = box_iou(boxes, self.truth_boxes)
        return (ious.max(axis=1) >= self.min_iou).astype(np.float64)


class ContrastDetector:
    """Baseline scorer: how much darker a box interior is than its surround.

    Vehicles appear as uniformly dark rectangles against the road. The
    score is the mean intensity of two horizontal strips just above and
    below the box minus the interior mean, minus a penalty on the interior
    standard deviation. Horizontal strips dodge the near-vertical marker
    stripes that would otherwise brighten a side ring, and the uniformity
    penalty separates tight boxes from partial overlaps whose interior
    mixes vehicle and road. Integral images keep scoring a full proposal
    set cheap.
    """

    def __init__(self, margin: int = 5, uniformity_penalty: float = 0.38):
        self.margin = margin
        self.uniformity_penalty = uniformity_penalty

    def score(self, frame: np.ndarray, boxes: np.ndarray) -> np.ndarray:
        boxes = np.asarray(boxes, dtype=np.int64).reshape(-1, 4)
        if boxes.shape[0] == 0:
            return np.zeros(0)
        frame = np.asarray(frame, dtype=np.float64)
        h, w = frame.shape
        integral = np.zeros((h + 1, w + 1))
        np.cumsum(np.cumsum(frame, axis=0), axis=1, out=integral[1:, 1:])
        integral2 = np.zeros((h + 1, w + 1))
        np.cumsum(np.cumsum(frame * frame, axis=0), axis=1, out=integral2[1:, 1:])

        def rect_sum(table, x0, y0, x1, y1):
            return table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0]

        x0, y0, x1, y1 = boxes.T
        n_inner = np.maximum(((x1 - x0) * (y1 - y0)).astype(np.float64), 1.0)
        inner_mean = rect_sum(integral, x0, y0, x1, y1) / n_inner
        inner_var = np.maximum(
            rect_sum(integral2, x0, y0, x1, y1) / n_inner - inner_mean**2, 0.0
        )
        # two surround estimates: horizontal strips above/below and vertical
        # strips at the sides; the min rejects boxes where one orientation
        # is brightened by a marker dash running alongside.
        ty0 = np.clip(y0 - self.margin, 0, h)
        by1 = np.clip(y1 + self.margin, 0, h)
        hsum = rect_sum(integral, x0, ty0, x1, y0) + rect_sum(integral, x0, y1, x1, by1)
        hcnt = np.maximum(((y0 - ty0) + (by1 - y1)) * (x1 - x0), 1.0).astype(np.float64)
        lx0 = np.clip(x0 - self.margin, 0, w)
        rx1 = np.clip(x1 + self.margin, 0, w)
        height_px = np.maximum((y1 - y0).astype(np.float64), 1.0)
        left_mean = rect_sum(integral, lx0, y0, x0, y1) / np.maximum((x0 - lx0) * height_px, 1.0)
        right_mean = rect_sum(integral, x1, y0, rx1, y1) / np.maximum((rx1 - x1) * height_px, 1.0)
        surround = np.minimum(hsum / hcnt, 0.5 * (left_mean + right_mean))
        return surround - inner_mean - self.uniformity_penalty * np.sqrt(inner_var)


def detect_vehicles(
    frame: np.ndarray,
    proposals: np.ndarray,
    detector,
    threshold: float,
    model: LaneModel,
    nms_iou: float = 0.5,
) -> list[Detection]:
    """Score proposals, suppress overlaps, and assign lane slots.

    ``detector`` is anything with score(frame, boxes) -> per-box reals.
    Survivors whose lower edge escapes every lane region are discarded
    because they cannot inform the lane-count refinement.
    """
    proposals = np.asarray(proposals).reshape(-1, 4)
    if proposals.shape[0] == 0:
        return []
    scores = np.asarray(detector.score(frame, proposals), dtype=np.float64)
    hot = scores >= threshold
    boxes, scores = proposals[hot], scores[hot]
    if boxes.shape[0] == 0:
        return []
    keep = nms(boxes, scores, nms_iou)
    detections = []
    for i in keep:
        slot = lane_slot_of(boxes[i], model)
        if slot is None:
            continue
        detections.append(
            Detection(box=tuple(int(v) for v in boxes[i]), score=float(scores[i]), lane_slot=slot)
        )
    return detections


# ---------------------------------------------------------------------------
# lane-count refinement


def refine_theta1(theta_init, detections) -> tuple[int, int]:
    """Widen the lane-count estimate using out-of-set vehicle slots.

    Detections inside the label's marker index set leave it unchanged. A
    vehicle left of the set shifts both the lane count and the host index
    by the gap to the set's left edge; one right of the set grows only the
    lane count. Only the most extreme out-of-set slot per side counts. The
    lane count is clamped at 6 and the result must stay inside the
    supported class set, otherwise the initial label is returned.
    """
    ind = lane_indices(theta_init)
    lo, hi = min(ind), max(ind)
    slots = [d.lane_slot if isinstance(d, Detection) else int(d) for d in detections]
    left = [s for s in slots if 1 <= s < 4 and s < lo]
    right = [s for s in slots if 5 < s <= 8 and s > hi]
    t1, t2 = int(theta_init[0]), int(theta_init[1])
    if left:
        shift = lo - min(left)
        t1 += shift
        t2 += shift
    if right:
        t1 += max(right) - hi
    t1 = min(t1, 6)
    if (t1, t2) == (int(theta_init[0]), int(theta_init[1])):
        return t1, t2
    if not is_supported((t1, t2)):
        return int(theta_init[0]), int(theta_init[1])
    return t1, t2


def refinement_reweight(likelihood: np.ndarray, refined_theta1: int, rho: float) -> np.ndarray:
    """Down-weight classes whose lane count disagrees with the refined one.

    Classes matching ``refined_theta1`` keep weight 1, the rest are scaled
    by ``rho``; the result is renormalized. This keeps the per-frame
    refinement soft enough for smoothing to recover from false detections.
    """
    from .labels import SUPPORTED_LABELS

    w = np.array([1.0 if t1 == refined_theta1 else rho for t1, _ in SUPPORTED_LABELS])
    out = np.asarray(likelihood, dtype=np.float64) * w
    total = out.sum()
    if total <= 0:
        return np.full_like(out, 1.0 / out.size)
    return out / total
