"""Deterministic synthetic road-scene corpus with full ground truth.

Straight multi-lane roads are rendered in perspective: eight marker lines
fan out from a single vanishing point, dashed stripes are painted for the
markers implied by each clip's label, and dark rectangles stand in for
vehicles. Camera geometry is fixed across a corpus, so one offset
calibration serves every clip; per-clip variation is limited to lateral
position, sway, dash phase, brightness, noise, and traffic.

Everything is keyed off a seed: the same seed always produces the same
bytes on disk.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as lio
from .detection import lane_indices
from .labels import SUPPORTED_LABELS
from .lanemodel import LaneModel, LineFit, OffsetParams

DEFAULT_WIDTH = 352
DEFAULT_HEIGHT = 264

# Rough shape of a real-world frame distribution over the classes: the
# four-lane center-heavy configurations dominate, six-lane roads are rare.
DEFAULT_CLASS_WEIGHTS = (0.12, 0.13, 0.25, 0.04, 0.06, 0.18, 0.20, 0.02)


@dataclass(frozen=True)
class SceneGeometry:
    """Camera and road constants shared by every clip in a corpus."""

    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    vanish_x: float = 176.0
    vanish_y: float = 90.0
    lane_width_bottom: float = 46.0
    horizon_y: int = 153

    @property
    def bottom_y(self) -> int:
        return self.height - 1

    def depth_scale(self, y) -> np.ndarray:
        """0 at the vanishing point, 1 at the bottom row."""
        return (np.asarray(y, dtype=np.float64) - self.vanish_y) / (self.bottom_y - self.vanish_y)

    def marker_line(self, idx: int, lateral_shift: float = 0.0) -> LineFit:
        """The line of marker ``idx`` (1..8) given the camera's lateral shift."""
        bx = self.width / 2.0 + lateral_shift + (idx - 4.5) * self.lane_width_bottom
        a = (bx - self.vanish_x) / (self.bottom_y - self.vanish_y)
        b = self.vanish_x - a * self.vanish_y
        return LineFit(a=float(a), b=float(b))

    def truth_offsets(self) -> OffsetParams:
        """Offset coefficients implied by the geometry (shift-independent)."""
        cl = self.marker_line(4)
        cr = self.marker_line(5)

        def pair(center: LineFit, other: LineFit, sign: float):
            return (sign * (other.a - center.a), sign * (other.b - center.b))

        left = tuple(pair(cl, self.marker_line(4 - i), -1.0) for i in (1, 2, 3))
        right = tuple(pair(cr, self.marker_line(5 + i), 1.0) for i in (1, 2, 3))
        return OffsetParams(left=left, right=right)

    def truth_model(self, lateral_shift: float = 0.0) -> LaneModel:
        return LaneModel(
            cl=self.marker_line(4, lateral_shift),
            cr=self.marker_line(5, lateral_shift),
            offsets=self.truth_offsets(),
            horizon_y=self.horizon_y,
            bottom_y=self.bottom_y,
        )


@dataclass(frozen=True)
class ClipSpec:
    """What to render for one clip; overrides exist for targeted fixtures."""

    clip_id: str
    theta: tuple[int, int]
    n_frames: int = 60
    noise: float = 0.02
    brightness_jitter: float = 0.05
    occlusion_rate: float = 0.3
    # None renders the markers implied by theta; a tuple overrides them,
    # e.g. to erase an outer marker while keeping the label.
    visible_markers: tuple[int, ...] | None = None
    # lane regions (1..7) that must carry a vehicle for the whole clip
    forced_vehicle_regions: tuple[int, ...] = ()


@dataclass
class VehicleTrack:
    region: int
    y_start: float
    speed: float
    width_frac: float
    jitter: float
    shade: float
    t_enter: int
    t_exit: int


@dataclass
class ClipData:
    """Rendered frames plus every piece of generating ground truth."""

    spec: ClipSpec
    model: LaneModel  # clip-level truth (frame 0 lateral position)
    frames: list = field(default_factory=list)
    # per frame: list of (box, region) with half-open int boxes
    vehicles: list = field(default_factory=list)
    # marker idx -> (n, 2) int array of stripe pixels (x, y) painted in frame 0
    marker_pixels: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)


def _dash_on(rows: np.ndarray, phase: float, period: float, duty: float) -> np.ndarray:
    return ((rows + phase) % period) < duty * period


def _paint_stripes(img, rows, xs, halfw, value):
    """Paint vertical stripe segments of per-row half-width around xs.

    Returns the painted (x, y) pixels.
    """
    h, w = img.shape
    centers = np.rint(xs).astype(np.int64)
    painted = []
    for d in range(-4, 5):
        cols = centers + d
        hit = (np.abs(cols - xs) <= halfw) & (cols >= 0) & (cols < w)
        img[rows[hit], cols[hit]] = value
        if hit.any():
            painted.append(np.column_stack([cols[hit], rows[hit]]))
    if not painted:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(painted)


def render_frame(
    geometry: SceneGeometry,
    visible_markers,
    lateral_shift: float,
    dash_phase: float,
    vehicles,
    road_value: float = 0.28,
    marker_value: float = 0.85,
    record_centerlines: dict | None = None,
) -> np.ndarray:
    """Render one noiseless frame; ``vehicles`` is a list of (box, shade)."""
    g = geometry
    img = np.empty((g.height, g.width), dtype=np.float64)
    # sky: smooth vertical gradient ending brighter than the road, so the
    # horizon step's bright side lies above the model band
    sky_rows = np.arange(g.horizon_y, dtype=np.float64)
    img[: g.horizon_y] = (0.52 - 0.16 * sky_rows / max(g.horizon_y - 1, 1))[:, None]
    img[g.horizon_y :] = road_value

    rows = np.arange(g.horizon_y, g.height)
    scale = g.depth_scale(rows)

    # soft shoulders: a smooth lateral ramp beyond the outermost markers,
    # dark enough to read as off-road but too gradual to binarize
    left_line = g.marker_line(min(visible_markers), lateral_shift)
    right_line = g.marker_line(max(visible_markers), lateral_shift)
    cols = np.arange(g.width, dtype=np.float64)
    ramp_len = 16.0
    for line, sign in ((left_line, -1.0), (right_line, 1.0)):
        edge = line.x_at(rows) + sign * 4.0
        t = np.clip(sign * (cols[None, :] - edge[:, None]) / ramp_len, 0.0, 1.0)
        img[g.horizon_y :] -= 0.05 * t * t * (3.0 - 2.0 * t)

    for idx in sorted(visible_markers):
        line = g.marker_line(idx, lateral_shift)
        if idx in (4, 5):
            period, duty, phase = 22.0, 0.70, dash_phase + idx * 7.0
        else:
            period, duty, phase = 24.0, 0.55, dash_phase + idx * 7.0
        on = _dash_on(rows, phase, period, duty)
        seg_rows = rows[on]
        if seg_rows.size == 0:
            continue
        xs = line.x_at(seg_rows)
        halfw = 0.5 + 1.1 * scale[on]
        painted = _paint_stripes(img, seg_rows, xs, halfw, marker_value)
        if record_centerlines is not None:
            record_centerlines[idx] = painted

    for box, shade in vehicles:
        x0, y0, x1, y1 = box
        img[y0:y1, x0:x1] = shade
        img[max(y1 - 2, y0) : y1, x0:x1] = max(shade - 0.06, 0.02)  # under-body shadow

    return img


def _plan_tracks(spec: ClipSpec, rng, present_regions: list[int]) -> list[VehicleTrack]:
    tracks = []
    n_random = int(rng.poisson(spec.occlusion_rate * spec.n_frames / 30.0))
    for _ in range(n_random):
        region = int(rng.choice(present_regions))
        tracks.append(
            VehicleTrack(
                region=region,
                y_start=float(rng.uniform(0.55, 0.88)),
                speed=float(rng.uniform(0.2, 1.0)),
                width_frac=float(rng.uniform(0.66, 0.84)),
                jitter=float(rng.uniform(-0.06, 0.06)),
                shade=float(rng.uniform(0.06, 0.14)),
                t_enter=int(rng.integers(-spec.n_frames // 2, spec.n_frames)),
                t_exit=spec.n_frames,
            )
        )
    for region in spec.forced_vehicle_regions:
        tracks.append(
            VehicleTrack(
                region=int(region),
                y_start=float(rng.uniform(0.60, 0.75)),
                speed=float(rng.uniform(0.05, 0.25)),
                width_frac=float(rng.uniform(0.70, 0.82)),
                jitter=float(rng.uniform(-0.05, 0.05)),
                shade=float(rng.uniform(0.06, 0.13)),
                t_enter=0,
                t_exit=spec.n_frames,
            )
        )
    return tracks


def _track_box(track: VehicleTrack, geometry: SceneGeometry, lateral_shift: float, t: int):
    """Half-open box of a track at frame t, or None when off-screen."""
    if not track.t_enter <= t < track.t_exit:
        return None
    g = geometry
    band = g.bottom_y - g.horizon_y
    y_max = g.horizon_y + track.y_start * band + track.speed * (t - max(track.t_enter, 0))
    if y_max > g.bottom_y - 1:
        return None
    xs_left = g.marker_line(track.region, lateral_shift).x_at(y_max)
    xs_right = g.marker_line(track.region + 1, lateral_shift).x_at(y_max)
    span = xs_right - xs_left
    w = track.width_frac * span
    h = 0.8 * w
    cx = (xs_left + xs_right) / 2.0 + track.jitter * span
    x0 = int(round(cx - w / 2.0))
    x1 = int(round(cx + w / 2.0))
    y1 = int(round(y_max))
    y0 = int(round(y_max - h))
    x0, x1 = max(x0, 0), min(x1, g.width)
    y0, y1 = max(y0, g.horizon_y - 10), min(y1, g.height)
    if x1 - x0 < 3 or y1 - y0 < 3:
        return None
    return (x0, y0, x1, y1)


def generate_clip(spec: ClipSpec, geometry: SceneGeometry | None = None, seed: int = 7) -> ClipData:
    """Render a clip deterministically from (seed, clip_id)."""
    g = geometry if geometry is not None else SceneGeometry()
    rng = np.random.default_rng(
        np.random.SeedSequence((int(seed),) + tuple(spec.clip_id.encode()))
    )
    visible = (
        tuple(sorted(lane_indices(spec.theta)))
        if spec.visible_markers is None
        else tuple(sorted(spec.visible_markers))
    )
    regions = sorted(lane_indices(spec.theta) - {max(lane_indices(spec.theta))})

    lateral_shift = float(rng.uniform(-8.0, 8.0))
    sway_amp = float(rng.uniform(0.0, 1.5))
    sway_period = float(rng.uniform(40.0, 80.0))
    brightness = float(rng.uniform(-spec.brightness_jitter, spec.brightness_jitter))
    dash_phase0 = float(rng.uniform(0.0, 24.0))
    dash_speed = float(rng.uniform(2.5, 5.0))
    marker_value = float(rng.uniform(0.80, 0.90))
    road_value = float(rng.uniform(0.26, 0.30))
    tracks = _plan_tracks(spec, rng, regions)

    data = ClipData(spec=spec, model=g.truth_model(lateral_shift))
    for t in range(spec.n_frames):
        lateral = lateral_shift + sway_amp * np.sin(2.0 * np.pi * t / sway_period)
        frame_vehicles = []
        truth_boxes = []
        for track in tracks:
            box = _track_box(track, g, lateral, t)
            if box is not None:
                frame_vehicles.append((box, track.shade))
                truth_boxes.append((box, track.region))
        record = data.marker_pixels if t == 0 else None
        img = render_frame(
            g,
            visible,
            lateral,
            dash_phase0 + dash_speed * t,
            frame_vehicles,
            road_value=road_value,
            marker_value=marker_value,
            record_centerlines=record,
        )
        img = img + brightness + rng.normal(0.0, spec.noise, img.shape)
        data.frames.append(np.clip(img, 0.0, 1.0))
        data.vehicles.append(truth_boxes)

    # exact marker annotations from the clip-level geometry, every 6th row
    ys = np.arange(g.horizon_y, g.bottom_y + 1, 6, dtype=np.float64)
    for idx in range(1, 9):
        xs = g.marker_line(idx, lateral_shift).x_at(ys)
        data.annotations[idx] = np.column_stack([np.rint(xs), ys])
    return data


def plan_corpus_classes(n_clips: int, classes=None, weights=DEFAULT_CLASS_WEIGHTS) -> list[tuple[int, int]]:
    """Per-clip labels: an explicit class cycle, or the weighted default mix."""
    if classes:
        return [tuple(classes[i % len(classes)]) for i in range(n_clips)]
    # largest-remainder apportionment with at least one clip per class
    raw = np.asarray(weights, dtype=np.float64) * n_clips
    counts = np.maximum(np.floor(raw).astype(int), 1 if n_clips >= len(weights) else 0)
    while counts.sum() > n_clips:
        counts[int(np.argmax(counts))] -= 1
    remainder = raw - np.floor(raw)
    while counts.sum() < n_clips:
        order = np.argsort(-remainder, kind="stable")
        for c in order:
            if counts.sum() >= n_clips:
                break
            counts[c] += 1
    labels = []
    for c, n in enumerate(counts):
        labels.extend([SUPPORTED_LABELS[c]] * int(n))
    return labels[:n_clips]


def generate_corpus(
    out_dir,
    n_clips: int = 40,
    frames_per_clip: int = 60,
    classes=None,
    noise: float = 0.02,
    occlusion_rate: float = 0.3,
    brightness_jitter: float = 0.05,
    seed: int = 7,
    geometry: SceneGeometry | None = None,
) -> Path:
    """Write a complete corpus: frames, labels, split, and ground truth."""
    g = geometry if geometry is not None else SceneGeometry()
    out = lio.ensure_dir(out_dir)
    plan = plan_corpus_classes(n_clips, classes)
    labels = {}
    partitions: dict[str, list[str]] = {"train": [], "test": []}
    seen_per_class: dict[tuple[int, int], int] = {}
    for i, theta in enumerate(plan):
        clip_id = f"clip_{i:03d}"
        spec = ClipSpec(
            clip_id=clip_id,
            theta=theta,
            n_frames=frames_per_clip,
            noise=noise,
            brightness_jitter=brightness_jitter,
            occlusion_rate=occlusion_rate,
        )
        data = generate_clip(spec, g, seed=seed)
        clip_dir = lio.ensure_dir(out / clip_id)
        for t, frame in enumerate(data.frames):
            lio.write_pgm(clip_dir / f"frame_{t:05d}.pgm", lio.frame_to_u8(frame))
        lio.write_annotations(clip_dir / "annotations.txt", data.annotations)
        write_lane_model(clip_dir / "markers.txt", data.model)
        with open(clip_dir / "vehicles.txt", "w") as fh:
            for t, boxes in enumerate(data.vehicles):
                for (x0, y0, x1, y1), region in boxes:
                    fh.write(f"{t} {x0} {y0} {x1} {y1} {region}\n")
        labels[clip_id] = theta
        k = seen_per_class.get(theta, 0)
        partitions["train" if k % 2 == 0 else "test"].append(clip_id)
        seen_per_class[theta] = k + 1
    lio.write_labels_csv(out / "labels.csv", labels)
    lio.write_split(out / "split.csv", partitions)
    return out


def read_vehicle_truth(path) -> dict[int, list[tuple[tuple[int, int, int, int], int]]]:
    """Read a vehicles.txt into {frame_idx: [(box, region), ...]}."""
    out: dict[int, list] = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            t, x0, y0, x1, y1, region = (int(v) for v in parts)
            out.setdefault(t, []).append(((x0, y0, x1, y1), region))
    return out


def write_lane_model(path, model: LaneModel) -> None:
    """Ground-truth lane model as key=value text."""
    with open(path, "w") as fh:
        fh.write(f"cl_a={model.cl.a!r}\ncl_b={model.cl.b!r}\n")
        fh.write(f"cr_a={model.cr.a!r}\ncr_b={model.cr.b!r}\n")
        fh.write(f"horizon_y={model.horizon_y}\nbottom_y={model.bottom_y}\n")
        for side, slots in (("l", model.offsets.left), ("r", model.offsets.right)):
            for i, (m, k) in enumerate(slots, start=1):
                fh.write(f"m_{side}_{i}={m!r}\nk_{side}_{i}={k!r}\n")


def read_lane_model(path) -> LaneModel:
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, _, raw = line.partition("=")
                values[key] = float(raw)
    left = tuple((values[f"m_l_{i}"], values[f"k_l_{i}"]) for i in (1, 2, 3))
    right = tuple((values[f"m_r_{i}"], values[f"k_r_{i}"]) for i in (1, 2, 3))
    return LaneModel(
        cl=LineFit(values["cl_a"], values["cl_b"]),
        cr=LineFit(values["cr_a"], values["cr_b"]),
        offsets=OffsetParams(left=left, right=right),
        horizon_y=int(values["horizon_y"]),
        bottom_y=int(values["bottom_y"]),
    )
