"""Input validation helpers used at estimator and function boundaries."""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidInputError


def check_frame(frame) -> np.ndarray:
    """Validate a grayscale frame: 2-D float array with values in [0, 1]."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"frame must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInputError(f"frame has a zero dimension: {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidInputError("frame contains non-finite intensities")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidInputError("frame intensities must lie in [0, 1]")
    return arr


def check_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype != np.bool_:
        if not np.isin(arr, (0, 1)).all():
            raise InvalidInputError("mask values must be boolean or {0,1}")
        arr = arr.astype(bool)
    if arr.ndim != 2 or 0 in arr.shape:
        raise InvalidInputError(f"mask must be 2-D and nonempty, got {arr.shape}")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if a.shape != b.shape:
        raise InvalidInputError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def check_feature_matrix(X, dim: int) -> np.ndarray:
    """Validate a feature matrix: (n, dim) finite floats. 1-D input is a row."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InvalidInputError(
            f"expected feature matrix of width {dim}, got shape {arr.shape}"
        )
    if not np.isfinite(arr).all():
        raise InvalidInputError("feature matrix contains non-finite values")
    return arr


def check_likelihood(vec, n_classes: int, tol: float = 1e-9) -> np.ndarray:
    """Validate a likelihood vector: nonnegative, sums to 1 within tol."""
    arr = np.asarray(vec, dtype=np.float64)
    if arr.shape != (n_classes,):
        raise InvalidInputError(f"likelihood must have shape ({n_classes},)")
    if (arr < -tol).any():
        raise InvalidInputError("likelihood has negative entries")
    if abs(arr.sum() - 1.0) > tol:
        raise InvalidInputError(f"likelihood sums to {arr.sum()!r}, not 1")
    return arr


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    v = int(value)
    if v != value or v < minimum:
        raise InvalidInputError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return v
