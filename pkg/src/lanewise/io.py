"""On-disk formats: PGM/PPM images and the text interchange files.

Frames travel as binary PGM (magic ``P5``, maxval 255). Everything else is
line-oriented text: labels.csv, calibration annotations, offset parameters,
prediction and detection dumps, and the feature interchange file.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .exceptions import InvalidInputError
from .validation import check_frame


# ---------------------------------------------------------------------------
# netpbm images


def _read_pnm_header(data: bytes, magic: bytes, path) -> tuple[int, int, int, int]:
    """Parse a binary netpbm header, returning (width, height, maxval, offset)."""
    if not data.startswith(magic):
        raise InvalidInputError(f"{path}: expected netpbm magic {magic!r}")
    pos = len(magic)
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise InvalidInputError(f"{path}: truncated netpbm header")
        c = data[pos : pos + 1]
        if c == b"#":  # comment runs to end of line
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            token = data[pos:end]
            if not token.isdigit():
                raise InvalidInputError(f"{path}: bad header token {token!r}")
            fields.append(int(token))
            pos = end
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    width, height, maxval = fields
    return width, height, maxval, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM into a (h, w) uint8 array."""
    data = Path(path).read_bytes()
    width, height, maxval, offset = _read_pnm_header(data, b"P5", path)
    if maxval != 255:
        raise InvalidInputError(f"{path}: only maxval 255 is supported, got {maxval}")
    raster = data[offset : offset + width * height]
    if len(raster) != width * height:
        raise InvalidInputError(f"{path}: raster has {len(raster)} bytes, expected {width * height}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, img: np.ndarray) -> None:
    """Write a (h, w) uint8 array as binary PGM."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise InvalidInputError(f"PGM image must be 2-D, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise InvalidInputError(f"PGM image must be uint8, got {img.dtype}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary 8-bit PPM into a (h, w, 3) uint8 array."""
    data = Path(path).read_bytes()
    width, height, maxval, offset = _read_pnm_header(data, b"P6", path)
    if maxval != 255:
        raise InvalidInputError(f"{path}: only maxval 255 is supported, got {maxval}")
    raster = data[offset : offset + width * height * 3]
    if len(raster) != width * height * 3:
        raise InvalidInputError(f"{path}: truncated PPM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(path, img: np.ndarray) -> None:
    """Write a (h, w, 3) uint8 array as binary PPM."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise InvalidInputError(f"PPM image must be (h, w, 3) uint8, got {img.shape} {img.dtype}")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def frame_from_u8(img: np.ndarray) -> np.ndarray:
    """8-bit intensities to the internal [0, 1] float scale."""
    return np.asarray(img, dtype=np.float64) / 255.0


def frame_to_u8(frame: np.ndarray) -> np.ndarray:
    """[0, 1] float frame to 8-bit, rounding to nearest."""
    return np.rint(check_frame(frame) * 255.0).astype(np.uint8)


# ---------------------------------------------------------------------------
# clip datasets


def write_labels_csv(path, labels: dict[str, tuple[int, int]]) -> None:
    """labels.csv: one ``clip_id,theta1,theta2`` line per clip."""
    with open(path, "w") as fh:
        for clip_id in sorted(labels):
            t1, t2 = labels[clip_id]
            fh.write(f"{clip_id},{t1},{t2}\n")


def read_labels_csv(path) -> dict[str, tuple[int, int]]:
    labels = {}
    for lineno, line in enumerate(_text_lines(path), start=1):
        parts = line.split(",")
        if len(parts) != 3:
            raise InvalidInputError(f"{path}:{lineno}: expected clip_id,theta1,theta2")
        labels[parts[0].strip()] = (int(parts[1]), int(parts[2]))
    return labels


def write_split(path, partitions: dict[str, list[str]]) -> None:
    """Split file: one ``clip_id,partition`` line per clip."""
    with open(path, "w") as fh:
        for part in sorted(partitions):
            for clip_id in partitions[part]:
                fh.write(f"{clip_id},{part}\n")


def read_split(path) -> dict[str, list[str]]:
    partitions: dict[str, list[str]] = {}
    for lineno, line in enumerate(_text_lines(path), start=1):
        parts = line.split(",")
        if len(parts) != 2:
            raise InvalidInputError(f"{path}:{lineno}: expected clip_id,partition")
        partitions.setdefault(parts[1].strip(), []).append(parts[0].strip())
    return partitions


def clip_frame_paths(clip_dir) -> list[Path]:
    """The clip's PGM frames in frame order."""
    clip_dir = Path(clip_dir)
    paths = sorted(clip_dir.glob("frame_*.pgm"))
    if not paths:
        raise InvalidInputError(f"{clip_dir}: no frame_*.pgm files")
    return paths


# ---------------------------------------------------------------------------
# calibration annotations and offset parameters


def write_annotations(path, points: dict[int, np.ndarray]) -> None:
    """Marker annotations: one ``marker_index y x`` line per point (integers)."""
    with open(path, "w") as fh:
        for idx in sorted(points):
            for x, y in np.asarray(points[idx]):
                fh.write(f"{idx} {int(round(y))} {int(round(x))}\n")


def read_annotations(path) -> dict[int, np.ndarray]:
    """Read marker annotations into {marker_index: (n, 2) array of (x, y)}."""
    by_index: dict[int, list[tuple[int, int]]] = {}
    for lineno, line in enumerate(_text_lines(path), start=1):
        parts = line.split()
        if len(parts) != 3:
            raise InvalidInputError(f"{path}:{lineno}: expected 'marker_index y x'")
        idx, y, x = (int(p) for p in parts)
        if not 1 <= idx <= 8:
            raise InvalidInputError(f"{path}:{lineno}: marker index {idx} outside [1,8]")
        by_index.setdefault(idx, []).append((x, y))
    return {idx: np.array(pts, dtype=np.float64) for idx, pts in by_index.items()}


_OFFSET_KEYS = [f"{p}_{side}_{i}" for side in ("l", "r") for i in (1, 2, 3) for p in ("m", "k")]


def write_offsets(path, offsets) -> None:
    """Offset parameters as ``m_l_1=...`` key-value lines."""
    pairs = {}
    for side, slots in (("l", offsets.left), ("r", offsets.right)):
        for i, (m, k) in enumerate(slots, start=1):
            pairs[f"m_{side}_{i}"] = m
            pairs[f"k_{side}_{i}"] = k
    with open(path, "w") as fh:
        for key in _OFFSET_KEYS:
            fh.write(f"{key}={pairs[key]!r}\n")


def read_offsets(path):
    from .lanemodel import OffsetParams  # local import to avoid a cycle

    values = {}
    for lineno, line in enumerate(_text_lines(path), start=1):
        if "=" not in line:
            raise InvalidInputError(f"{path}:{lineno}: expected key=value")
        key, _, raw = line.partition("=")
        values[key.strip()] = float(raw)
    missing = [k for k in _OFFSET_KEYS if k not in values]
    if missing:
        raise InvalidInputError(f"{path}: missing offset keys: {', '.join(missing)}")
    left = tuple((values[f"m_l_{i}"], values[f"k_l_{i}"]) for i in (1, 2, 3))
    right = tuple((values[f"m_r_{i}"], values[f"k_r_{i}"]) for i in (1, 2, 3))
    return OffsetParams(left=left, right=right)


# ---------------------------------------------------------------------------
# predictions, detections, features


def write_predictions(path_or_file, rows) -> None:
    """Prediction dump: ``clip_id frame_idx theta1 theta2`` per frame."""
    close, fh = _open_for_write(path_or_file)
    try:
        for clip_id, frame_idx, theta in rows:
            t1, t2 = (0, 0) if theta is None else (int(theta[0]), int(theta[1]))
            fh.write(f"{clip_id} {int(frame_idx)} {t1} {t2}\n")
    finally:
        if close:
            fh.close()


def read_predictions(path) -> list[tuple[str, int, tuple[int, int]]]:
    rows = []
    for lineno, line in enumerate(_text_lines(path), start=1):
        parts = line.split()
        if len(parts) != 4:
            raise InvalidInputError(f"{path}:{lineno}: expected 'clip_id frame_idx theta1 theta2'")
        rows.append((parts[0], int(parts[1]), (int(parts[2]), int(parts[3]))))
    return rows


def write_detections(path, rows) -> None:
    """Detection dump: ``frame_idx x_min y_min x_max y_max score lane_slot``."""
    with open(path, "w") as fh:
        for frame_idx, det in rows:
            x0, y0, x1, y1 = (int(v) for v in det.box)
            fh.write(f"{int(frame_idx)} {x0} {y0} {x1} {y1} {det.score!r} {det.lane_slot}\n")


def write_features(path, rows) -> None:
    """Feature interchange file.

    One line per frame: ``clip_id frame_idx theta1 theta2`` followed by the
    240 feature values, all space-separated.
    """
    with open(path, "w") as fh:
        for clip_id, frame_idx, theta, vec in rows:
            vals = " ".join(repr(float(v)) for v in np.asarray(vec, dtype=np.float64))
            fh.write(f"{clip_id} {int(frame_idx)} {int(theta[0])} {int(theta[1])} {vals}\n")


def read_features(path, dim: int = 240):
    """Read a feature dump into (clip_ids, frame_idxs, labels (n,2), X (n,dim))."""
    clip_ids, frame_idxs, labels, vecs = [], [], [], []
    for lineno, line in enumerate(_text_lines(path), start=1):
        parts = line.split()
        if len(parts) != 4 + dim:
            raise InvalidInputError(f"{path}:{lineno}: expected {4 + dim} fields, got {len(parts)}")
        clip_ids.append(parts[0])
        frame_idxs.append(int(parts[1]))
        labels.append((int(parts[2]), int(parts[3])))
        vecs.append([float(v) for v in parts[4:]])
    X = np.array(vecs, dtype=np.float64) if vecs else np.zeros((0, dim))
    return clip_ids, frame_idxs, np.array(labels, dtype=np.int64).reshape(-1, 2), X


def _text_lines(path):
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                yield line


def _open_for_write(path_or_file):
    if hasattr(path_or_file, "write"):
        return False, path_or_file
    return True, open(path_or_file, "w")


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
