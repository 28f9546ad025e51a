"""Edge-preserving smoothing and bright-structure binarization.

The smoothing stage is a self-guided guided filter: per-pixel window
statistics give a local linear transform ``alpha * I + beta`` whose
coefficient maps are box-averaged before being applied. The binarization
keeps pixels brighter than ``delta`` times their own smoothed value, which
isolates thin bright structures such as lane markings.

All window sums run on integral images, so cost is linear in pixel count
regardless of window radius. Windows are clamped to the image border
(border pixels average over their in-bounds neighbors only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import InvalidInputError
from .validation import check_frame, check_mask, check_same_shape

DEFAULT_RADIUS = 4
DEFAULT_EPSILON = 0.1
DEFAULT_DELTA = 1.06


@dataclass(frozen=True)
class FilterParams:
    """Smoothing window half-width, variance regularizer, over-subtraction factor."""

    radius: int = DEFAULT_RADIUS
    epsilon: float = DEFAULT_EPSILON
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise InvalidInputError(f"radius must be an integer >= 1, got {self.radius!r}")
        if not self.epsilon > 0.0:
            raise InvalidInputError(f"epsilon must be > 0, got {self.epsilon!r}")
        if not self.delta > 1.0:
            raise InvalidInputError(f"delta must be > 1, got {self.delta!r}")


def _window_sums(img: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Sum and pixel count of the clamped (2r+1)^2 window around every pixel."""
    h, w = img.shape
    # Integral image with a zero top row / left column so any rectangle sum
    # is four lookups.
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=integral[1:, 1:])

    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.maximum(ys - radius, 0)
    y1 = np.minimum(ys + radius + 1, h)
    x0 = np.maximum(xs - radius, 0)
    x1 = np.minimum(xs + radius + 1, w)

    sums = (
        integral[np.ix_(y1, x1)]
        - integral[np.ix_(y0, x1)]
        - integral[np.ix_(y1, x0)]
        + integral[np.ix_(y0, x0)]
    )
    counts = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return sums, counts.astype(np.float64)


def box_mean(img: np.ndarray, radius: int) -> np.ndarray:
    """Mean of the clamped square window of half-width ``radius`` at each pixel."""
    sums, counts = _window_sums(np.asarray(img, dtype=np.float64), radius)
    return sums / counts


def window_stats(frame: np.ndarray, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel window mean and population variance (clamped windows)."""
    frame = np.asarray(frame, dtype=np.float64)
    s1, counts = _window_sums(frame, radius)
    s2, _ = _window_sums(frame * frame, radius)
    mu = s1 / counts
    # E[I^2] - E[I]^2 can drift a hair below zero in float; clamp so alpha >= 0.
    var = np.maximum(s2 / counts - mu * mu, 0.0)
    return mu, var


def guided_filter(
    frame: np.ndarray,
    radius: int = DEFAULT_RADIUS,
    epsilon: float = DEFAULT_EPSILON,
) -> np.ndarray:
    """Self-guided edge-preserving smoothing of a [0,1] grayscale frame.

    High-variance windows (edges) pass through nearly unchanged while flat
    regions are averaged with their neighborhood; ``epsilon`` sets the
    variance scale below which a window counts as flat.
    """
    frame = check_frame(frame)
    FilterParams(radius=radius, epsilon=epsilon, delta=DEFAULT_DELTA)
    mu, var = window_stats(frame, radius)
    alpha = var / (var + epsilon)
    beta = (1.0 - alpha) * mu
    alpha_bar = box_mean(alpha, radius)
    beta_bar = box_mean(beta, radius)
    return np.clip(alpha_bar * frame + beta_bar, 0.0, 1.0)


def binarize(frame: np.ndarray, filtered: np.ndarray, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Boolean mask of pixels at least ``delta`` times their smoothed value."""
    frame = check_frame(frame)
    filtered = check_frame(filtered)
    check_same_shape(frame, filtered, "frame and filtered image")
    if not delta > 1.0:
        raise InvalidInputError(f"delta must be > 1, got {delta!r}")
    return frame >= delta * filtered


class GuidedFilter(BaseEstimator, TransformerMixin):
    """Stateless transformer wrapping :func:`guided_filter`.

    Accepts a single (h, w) frame or a stack of frames (n, h, w).
    """

    def __init__(self, radius=DEFAULT_RADIUS, epsilon=DEFAULT_EPSILON):
        self.radius = radius
        self.epsilon = epsilon

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            return guided_filter(X, self.radius, self.epsilon)
        return np.stack([guided_filter(f, self.radius, self.epsilon) for f in X])


class MarkerBinarizer(BaseEstimator, TransformerMixin):
    """Guided filter followed by over-subtraction thresholding.

    transform() maps frames to boolean marker masks.
    """

    def __init__(self, radius=DEFAULT_RADIUS, epsilon=DEFAULT_EPSILON, delta=DEFAULT_DELTA):
        self.radius = radius
        self.epsilon = epsilon
        self.delta = delta

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            return binarize(X, guided_filter(X, self.radius, self.epsilon), self.delta)
        return np.stack([self.transform(f) for f in X])


def mask_to_u8(mask: np.ndarray) -> np.ndarray:
    """Render a boolean mask as {0, 255} for image output."""
    return np.where(check_mask(mask), 255, 0).astype(np.uint8)
