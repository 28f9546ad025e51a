"""Fixed-width lane geometry: center-marker detection, line fits, offsets.

The road is modeled as eight near-vertical marker lines bounding up to
seven lanes. The two host-lane boundaries are fitted per frame; the six
outer markers are generated from them through calibrated linear offset
functions of the image row. Marker indices run 1..8 left to right, the
host lane sitting between markers 4 and 5.

Lines are parameterized x = a*y + b (x as a function of y), which keeps
slopes bounded for near-vertical markers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .exceptions import InsufficientPointsError, InvalidInputError, OutOfBandError
from .validation import check_mask

LEFT_MARKERS = (1, 2, 3)
CENTER_MARKERS = (4, 5)
RIGHT_MARKERS = (6, 7, 8)
OUTER_MARKERS = (1, 2, 3, 6, 7, 8)


@dataclass(frozen=True)
class LineFit:
    """A line x = a*y + b; ``rms`` is the fit residual, not part of identity."""

    a: float
    b: float
    rms: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise InvalidInputError(f"line coefficients must be finite: a={self.a}, b={self.b}")

    def x_at(self, y):
        return self.a * np.asarray(y, dtype=np.float64) + self.b


@dataclass(frozen=True)
class OffsetParams:
    """Per-side offset coefficients (m, k), offset(y) = m*y + k.

    Slot i (1-based) is the distance from the center marker to the i-th
    marker going outward, so slot values increase with i at every row.
    """

    left: tuple[tuple[float, float], ...]
    right: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for name, slots in (("left", self.left), ("right", self.right)):
            if len(slots) != 3:
                raise InvalidInputError(f"{name} offsets need exactly 3 slots, got {len(slots)}")
            for m, k in slots:
                if not (np.isfinite(m) and np.isfinite(k)):
                    raise InvalidInputError(f"{name} offset coefficients must be finite")

    def offset(self, side: str, slot: int, y):
        m, k = (self.left if side == "left" else self.right)[slot - 1]
        return m * np.asarray(y, dtype=np.float64) + k


@dataclass(frozen=True)
class LaneModel:
    """Two fitted center lines plus offsets; valid for rows in [horizon_y, bottom_y]."""

    cl: LineFit
    cr: LineFit
    offsets: OffsetParams
    horizon_y: int
    bottom_y: int

    def __post_init__(self):
        if not self.horizon_y < self.bottom_y:
            raise InvalidInputError(
                f"empty band: horizon_y={self.horizon_y} >= bottom_y={self.bottom_y}"
            )
        if not self.cr.x_at(self.bottom_y) > self.cl.x_at(self.bottom_y):
            raise InvalidInputError("right center marker must lie right of the left one")
        for y in (self.horizon_y, self.bottom_y):
            for side in ("left", "right"):
                offs = [self.offsets.offset(side, s, y) for s in (1, 2, 3)]
                # offsets are linear in y, so endpoint checks cover the band
                if offs[0] < 0 or not (offs[0] < offs[1] < offs[2]):
                    raise InvalidInputError(
                        f"{side} offsets must be nonnegative and increasing at y={y}: {offs}"
                    )

    def contains_row(self, y) -> bool:
        return self.horizon_y <= y <= self.bottom_y

    def marker_matrix(self, ys) -> np.ndarray:
        """Marker x positions for rows ``ys`` as a (len(ys), 8) array.

        No band check; callers filter rows themselves.
        """
        ys = np.atleast_1d(np.asarray(ys, dtype=np.float64))
        xl = self.cl.x_at(ys)
        xr = self.cr.x_at(ys)
        cols = [
            xl - self.offsets.offset("left", 3, ys),
            xl - self.offsets.offset("left", 2, ys),
            xl - self.offsets.offset("left", 1, ys),
            xl,
            xr,
            xr + self.offsets.offset("right", 1, ys),
            xr + self.offsets.offset("right", 2, ys),
            xr + self.offsets.offset("right", 3, ys),
        ]
        return np.stack(cols, axis=1)


def marker_position(model: LaneModel, idx: int, y) -> float:
    """x position of marker ``idx`` (1..8) at image row ``y`` within the band."""
    if not 1 <= int(idx) <= 8 or int(idx) != idx:
        raise InvalidInputError(f"marker index must be an integer in [1,8], got {idx!r}")
    if not model.contains_row(y):
        raise OutOfBandError(
            f"row {y} outside band [{model.horizon_y}, {model.bottom_y}]"
        )
    idx = int(idx)
    if idx == 4:
        return float(model.cl.x_at(y))
    if idx == 5:
        return float(model.cr.x_at(y))
    if idx in LEFT_MARKERS:
        return float(model.cl.x_at(y) - model.offsets.offset("left", 4 - idx, y))
    return float(model.cr.x_at(y) + model.offsets.offset("right", idx - 5, y))


# ---------------------------------------------------------------------------
# center-marker detection


@dataclass(frozen=True)
class TrapezoidRoi:
    """Search region for the host-lane markers, widening toward the bottom."""

    y_top: int
    y_bottom: int
    center_x: float
    half_width_top: float
    half_width_bottom: float

    def as_mask(self, height: int, width: int) -> np.ndarray:
        ys = np.arange(height, dtype=np.float64)
        t = np.clip((ys - self.y_top) / max(self.y_bottom - self.y_top, 1), 0.0, 1.0)
        halfw = self.half_width_top + (self.half_width_bottom - self.half_width_top) * t
        xs = np.arange(width, dtype=np.float64)
        inside = np.abs(xs[None, :] - self.center_x) <= halfw[:, None]
        inside[: self.y_top, :] = False
        inside[self.y_bottom + 1 :, :] = False
        return inside


def default_roi(width: int, height: int) -> TrapezoidRoi:
    return TrapezoidRoi(
        y_top=int(round(0.60 * height)),
        y_bottom=height - 1,
        center_x=width / 2.0,
        half_width_top=0.10 * width,
        half_width_bottom=0.22 * width,
    )


def detect_center_markers(
    mask: np.ndarray,
    roi: TrapezoidRoi,
    area_min: int = 20,
    area_max: int = 2000,
    min_elongation: float = 3.0,
    max_tilt_deg: float = 60.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Candidate host-marker pixels, split left/right of the ROI midline.

    Connected components of the mask inside the ROI are kept when they look
    like marker dashes: bounded area, elongated, and roughly vertical.
    Returns two (n, 2) arrays of (x, y) pixel coordinates; either may be
    empty.
    """
    mask = check_mask(mask)
    h, w = mask.shape
    region = mask & roi.as_mask(h, w)
    labels, n_comp = ndimage.label(region, structure=np.ones((3, 3), dtype=int))
    left_pts: list[np.ndarray] = []
    right_pts: list[np.ndarray] = []
    if n_comp:
        comp_slices = ndimage.find_objects(labels)
        for comp_id, sl in enumerate(comp_slices, start=1):
            ys, xs = np.nonzero(labels[sl] == comp_id)
            area = ys.size
            if not area_min <= area <= area_max:
                continue
            ys = ys + sl[0].start
            xs = xs + sl[1].start
            if not _is_marker_shaped(xs, ys, min_elongation, max_tilt_deg):
                continue
            pts = np.column_stack([xs, ys])
            if xs.mean() < roi.center_x:
                left_pts.append(pts)
            else:
                right_pts.append(pts)
    empty = np.zeros((0, 2), dtype=np.int64)
    left = np.concatenate(left_pts) if left_pts else empty
    right = np.concatenate(right_pts) if right_pts else empty
    return left, right


def _is_marker_shaped(xs, ys, min_elongation: float, max_tilt_deg: float) -> bool:
    """Elongation and verticality test on a component's second moments."""
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    cxx = np.mean(dx * dx)
    cyy = np.mean(dy * dy)
    cxy = np.mean(dx * dy)
    tr = cxx + cyy
    det = cxx * cyy - cxy * cxy
    disc = max(tr * tr / 4.0 - det, 0.0)
    lam1 = tr / 2.0 + np.sqrt(disc)  # major-axis variance
    lam2 = tr / 2.0 - np.sqrt(disc)
    if lam2 <= 1e-12:
        elongation = np.inf
    else:
        elongation = np.sqrt(lam1 / lam2)
    if elongation < min_elongation:
        return False
    # major-axis direction; tilt measured from the vertical (y) axis
    if abs(cxy) > 1e-12:
        vx, vy = lam1 - cyy, cxy
    elif cxx >= cyy:
        vx, vy = 1.0, 0.0
    else:
        vx, vy = 0.0, 1.0
    norm = np.hypot(vx, vy)
    if norm == 0.0:
        return False
    tilt = np.degrees(np.arccos(min(abs(vy) / norm, 1.0)))
    return tilt <= max_tilt_deg


# ---------------------------------------------------------------------------
# line fitting


def least_squares_line(points: np.ndarray, side: str = "points") -> LineFit:
    """Plain least squares of x on y over (x, y) points."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 2:
        raise InsufficientPointsError(f"{side}: need at least 2 points to fit a line")
    xs, ys = points[:, 0], points[:, 1]
    if np.unique(ys).size < 2:
        raise InsufficientPointsError(f"{side}: points must cover at least 2 distinct rows")
    a, b = np.polyfit(ys, xs, 1)
    resid = xs - (a * ys + b)
    return LineFit(a=float(a), b=float(b), rms=float(np.sqrt(np.mean(resid**2))))


def ransac_line(
    points: np.ndarray,
    inlier_threshold: float = 2.0,
    iterations: int = 100,
    seed: int = 0,
    side: str = "points",
) -> LineFit:
    """RANSAC-robust line fit: best 2-point hypothesis refined on its inliers.

    Deterministic under ``seed``. Falls back to the raw hypothesis only if
    the inlier refit degenerates (cannot happen with >= 2 distinct rows).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 2:
        raise InsufficientPointsError(f"{side}: need at least 2 points to fit a line")
    xs, ys = points[:, 0], points[:, 1]
    if np.unique(ys).size < 2:
        raise InsufficientPointsError(f"{side}: points must cover at least 2 distinct rows")

    n = points.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), n)))
    idx = rng.integers(0, n, size=(iterations, 2))
    y1, y2 = ys[idx[:, 0]], ys[idx[:, 1]]
    x1, x2 = xs[idx[:, 0]], xs[idx[:, 1]]
    ok = y1 != y2
    if not ok.any():
        return least_squares_line(points, side=side)
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = (x2 - x1) / (y2 - y1)
    slopes[~ok] = 0.0
    intercepts = x1 - slopes * y1
    # residuals of every point against every hypothesis
    resid = np.abs(xs[None, :] - (slopes[:, None] * ys[None, :] + intercepts[:, None]))
    counts = np.where(ok, (resid <= inlier_threshold).sum(axis=1), -1)
    best = int(np.argmax(counts))  # first best wins: deterministic tie-break
    inliers = resid[best] <= inlier_threshold
    try:
        return least_squares_line(points[inliers], side=side)
    except InsufficientPointsError:
        return LineFit(a=float(slopes[best]), b=float(intercepts[best]), rms=0.0)


def fit_center_lines(
    left_points: np.ndarray,
    right_points: np.ndarray,
    inlier_threshold: float = 2.0,
    iterations: int = 100,
    seed: int = 0,
    use_ransac: bool = True,
) -> tuple[LineFit, LineFit]:
    """Fit the two host-lane marker lines from detected pixel sets.

    Raises InsufficientPointsError naming the failing side, so the caller
    can fall back to a previously fitted model.
    """
    fits = []
    for side, pts in (("left", left_points), ("right", right_points)):
        if use_ransac:
            fits.append(ransac_line(pts, inlier_threshold, iterations, seed, side=side))
        else:
            fits.append(least_squares_line(pts, side=side))
    return fits[0], fits[1]


# ---------------------------------------------------------------------------
# offset calibration

_MARKER_TO_SLOT = {1: ("left", 3), 2: ("left", 2), 3: ("left", 1),
                   6: ("right", 1), 7: ("right", 2), 8: ("right", 3)}


def calibrate_offsets(
    points_by_marker: dict[int, np.ndarray],
    cl: LineFit,
    cr: LineFit,
) -> OffsetParams:
    """Least-squares offset coefficients from annotated marker points.

    ``points_by_marker`` maps marker indices 1,2,3,6,7,8 to (n, 2) arrays
    of (x, y) positions; entries for the center markers are ignored. Each
    slot needs at least two points on distinct rows.
    """
    coeffs = {"left": [None, None, None], "right": [None, None, None]}
    for idx in OUTER_MARKERS:
        side, slot = _MARKER_TO_SLOT[idx]
        pts = np.asarray(points_by_marker.get(idx, np.zeros((0, 2))), dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2 or np.unique(pts[:, 1]).size < 2:
            raise InsufficientPointsError(
                f"marker {idx}: need >= 2 annotated points on distinct rows"
            )
        xs, ys = pts[:, 0], pts[:, 1]
        center = cl.x_at(ys) if side == "left" else cr.x_at(ys)
        observed = np.abs(xs - center)
        m, k = np.polyfit(ys, observed, 1)
        coeffs[side][slot - 1] = (float(m), float(k))
    return OffsetParams(left=tuple(coeffs["left"]), right=tuple(coeffs["right"]))
