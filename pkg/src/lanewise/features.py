"""Per-frame feature extraction around the modeled marker positions.

For each of the six outer markers a 40-value block is computed: intensity
mean/variance of the lane pixels in the marker's band, mean/variance of
the road pixels reached by walking down the local intensity gradient, and
a 36-bin histogram of gradient orientations at the lane pixels. Blocks are
concatenated in marker order 1, 2, 3, 6, 7, 8 into a 240-value vector; the
host-lane markers carry no block because their presence is assumed.
"""

from __future__ import annotations

import numpy as np

from .lanemodel import LaneModel
from .validation import check_frame, check_mask, check_same_shape

FEATURE_BLOCK = 40
FEATURE_MARKERS = (1, 2, 3, 6, 7, 8)
FEATURE_DIM = FEATURE_BLOCK * len(FEATURE_MARKERS)
HIST_BINS = 36

DEFAULT_BAND_HALFWIDTH = 6
DEFAULT_ROAD_STEP = 5


def sobel_gradients(frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel gradients (gx, gy) with edge-clamped borders; y points down."""
    p = np.pad(np.asarray(frame, dtype=np.float64), 1, mode="edge")
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy


def extract_lane_pixels(
    frame: np.ndarray,
    mask: np.ndarray,
    model: LaneModel,
    idx: int,
    band_halfwidth: int = DEFAULT_BAND_HALFWIDTH,
) -> np.ndarray:
    """Mask-true pixels within ``band_halfwidth`` of marker ``idx``.

    Restricted to the model's row band. Returns an (n, 2) array of (x, y),
    possibly empty; row-major order, no duplicates.
    """
    frame = check_frame(frame)
    mask = check_mask(mask)
    check_same_shape(frame, mask, "frame and mask")
    h, _ = mask.shape
    y_lo = max(int(np.ceil(model.horizon_y)), 0)
    y_hi = min(int(np.floor(model.bottom_y)), h - 1)
    if y_lo > y_hi:
        return np.zeros((0, 2), dtype=np.int64)
    ys, xs = np.nonzero(mask[y_lo : y_hi + 1])
    if ys.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    ys = ys + y_lo
    positions = model.marker_matrix(ys.astype(np.float64))[:, idx - 1]
    keep = np.abs(xs - positions) <= band_halfwidth
    return np.column_stack([xs[keep], ys[keep]]).astype(np.int64)


def extract_road_pixels(
    frame: np.ndarray,
    lane_pixels: np.ndarray,
    step: int = DEFAULT_ROAD_STEP,
    gradients: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Pixels ``step`` away from each lane pixel, down the intensity gradient.

    Walking against the gradient leaves the bright marker for the darker
    road surface. Lane pixels with zero gradient and targets falling outside
    the frame contribute nothing. Duplicates are removed; the result is
    sorted, hence deterministic.
    """
    frame = check_frame(frame)
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    lane_pixels = np.asarray(lane_pixels, dtype=np.int64).reshape(-1, 2)
    if lane_pixels.shape[0] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    gx, gy = sobel_gradients(frame) if gradients is None else gradients
    xs, ys = lane_pixels[:, 0], lane_pixels[:, 1]
    gxv = gx[ys, xs]
    gyv = gy[ys, xs]
    norm = np.hypot(gxv, gyv)
    moving = norm > 0.0
    if not moving.any():
        return np.zeros((0, 2), dtype=np.int64)
    tx = np.rint(xs[moving] - step * gxv[moving] / norm[moving]).astype(np.int64)
    ty = np.rint(ys[moving] - step * gyv[moving] / norm[moving]).astype(np.int64)
    h, w = frame.shape
    inb = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    if not inb.any():
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.column_stack([tx[inb], ty[inb]]), axis=0)


def marker_features(
    frame: np.ndarray,
    lane_pixels: np.ndarray,
    road_pixels: np.ndarray,
    gradients: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """The 40-value block for one marker.

    Layout: [lane mean, lane variance, road mean, road variance, 36 bins].
    Variances are population variances. An empty lane set yields an all-zero
    block; an empty road set zeroes only the road slots. Lane pixels with
    zero gradient count toward the 0-degree bin.
    """
    frame = check_frame(frame)
    block = np.zeros(FEATURE_BLOCK, dtype=np.float64)
    lane_pixels = np.asarray(lane_pixels, dtype=np.int64).reshape(-1, 2)
    if lane_pixels.shape[0] == 0:
        return block
    lane_vals = frame[lane_pixels[:, 1], lane_pixels[:, 0]]
    block[0] = lane_vals.mean()
    block[1] = lane_vals.var()
    road_pixels = np.asarray(road_pixels, dtype=np.int64).reshape(-1, 2)
    if road_pixels.shape[0] > 0:
        road_vals = frame[road_pixels[:, 1], road_pixels[:, 0]]
        block[2] = road_vals.mean()
        block[3] = road_vals.var()
    gx, gy = sobel_gradients(frame) if gradients is None else gradients
    gxv = gx[lane_pixels[:, 1], lane_pixels[:, 0]]
    gyv = gy[lane_pixels[:, 1], lane_pixels[:, 0]]
    angles = np.degrees(np.arctan2(gyv, gxv)) % 360.0
    bins = np.minimum((angles / 10.0).astype(np.int64), HIST_BINS - 1)
    counts = np.bincount(bins, minlength=HIST_BINS).astype(np.float64)
    block[4:] = counts / counts.sum()
    return block


def frame_features(
    frame: np.ndarray,
    mask: np.ndarray,
    model: LaneModel,
    band_halfwidth: int = DEFAULT_BAND_HALFWIDTH,
    step: int = DEFAULT_ROAD_STEP,
) -> np.ndarray:
    """The full 240-value frame descriptor, marker order 1, 2, 3, 6, 7, 8."""
    frame = check_frame(frame)
    gradients = sobel_gradients(frame)
    blocks = []
    for idx in FEATURE_MARKERS:
        lane = extract_lane_pixels(frame, mask, model, idx, band_halfwidth)
        road = extract_road_pixels(frame, lane, step, gradients=gradients)
        blocks.append(marker_features(frame, lane, road, gradients=gradients))
    return np.concatenate(blocks)
