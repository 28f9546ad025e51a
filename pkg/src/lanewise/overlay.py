"""Diagnostic overlay rendering: markers, host-lane shading, boxes, label."""

from __future__ import annotations

import numpy as np

from .lanemodel import LaneModel
from .validation import check_frame

MARKER_COLOR = (70, 200, 255)
CENTER_COLOR = (255, 215, 60)
HOST_TINT = (60, 160, 60)
BOX_COLOR = (255, 70, 70)
TEXT_COLOR = (255, 255, 255)

# 3x5 bitmap glyphs, rows top to bottom
_FONT = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
    "[": ("110", "100", "100", "100", "110"),
    "]": ("011", "001", "001", "001", "011"),
    ",": ("000", "000", "000", "010", "100"),
    "?": ("111", "001", "011", "000", "010"),
    " ": ("000", "000", "000", "000", "000"),
}


def _draw_text(img: np.ndarray, text: str, x: int, y: int, scale: int = 2) -> None:
    h, w = img.shape[:2]
    cx = x
    for ch in text:
        glyph = _FONT.get(ch, _FONT["?"])
        for gy, row in enumerate(glyph):
            for gx, bit in enumerate(row):
                if bit == "1":
                    y0, x0 = y + gy * scale, cx + gx * scale
                    img[max(y0, 0) : min(y0 + scale, h), max(x0, 0) : min(x0 + scale, w)] = TEXT_COLOR
        cx += 4 * scale


def render_overlay(frame: np.ndarray, model: LaneModel | None, theta, detections) -> np.ndarray:
    """Annotated RGB rendering of a frame; output matches the input size.

    Draws the eight modeled marker polylines, shades the host lane, writes
    the label as text, and outlines detection boxes. With no model only the
    label text is drawn; ``theta`` may be None for unpositioned frames.
    """
    frame = check_frame(frame)
    h, w = frame.shape
    rgb = np.repeat((frame * 255.0).round().astype(np.uint8)[:, :, None], 3, axis=2)

    if model is not None:
        ys = np.arange(max(model.horizon_y, 0), min(model.bottom_y, h - 1) + 1)
        xs = model.marker_matrix(ys.astype(np.float64))
        cols = np.rint(xs).astype(np.int64)
        # host-lane shading between the two center markers
        x4 = np.clip(cols[:, 3] + 1, 0, w)
        x5 = np.clip(cols[:, 4], 0, w)
        for row, a, b in zip(ys, x4, x5):
            if b > a:
                rgb[row, a:b] = (0.75 * rgb[row, a:b] + 0.25 * np.array(HOST_TINT)).astype(np.uint8)
        for m in range(8):
            color = CENTER_COLOR if m in (3, 4) else MARKER_COLOR
            inb = (cols[:, m] >= 0) & (cols[:, m] < w)
            rgb[ys[inb], cols[inb, m]] = color

    for det in detections or []:
        x0, y0, x1, y1 = (int(v) for v in det.box)
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, w), min(y1, h)
        if x1 <= x0 or y1 <= y0:
            continue
        rgb[y0, x0:x1] = BOX_COLOR
        rgb[y1 - 1, x0:x1] = BOX_COLOR
        rgb[y0:y1, x0] = BOX_COLOR
        rgb[y0:y1, x1 - 1] = BOX_COLOR

    text = "[?,?]" if theta is None else f"[{int(theta[0])},{int(theta[1])}]"
    _draw_text(rgb, text, 4, 4)
    return rgb
