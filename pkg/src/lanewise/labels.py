"""The closed set of (lane count, host lane) label vectors.

A label is a pair ``(theta1, theta2)``: theta1 lanes on the road, the host
vehicle driving in lane theta2 counted from the leftmost lane. Only the
eight configurations below are supported; everything else has zero prior.
"""

from __future__ import annotations

import numpy as np

from .exceptions import UnsupportedLabelError

SUPPORTED_LABELS: tuple[tuple[int, int], ...] = (
    (4, 1),
    (4, 2),
    (4, 3),
    (4, 4),
    (5, 2),
    (5, 3),
    (5, 4),
    (6, 4),
)

N_CLASSES = len(SUPPORTED_LABELS)

_LABEL_TO_INDEX = {label: i for i, label in enumerate(SUPPORTED_LABELS)}


def labels_array() -> np.ndarray:
    """All supported labels as an (8, 2) int array, class order."""
    return np.array(SUPPORTED_LABELS, dtype=np.int64)


def is_supported(theta) -> bool:
    t1, t2 = int(theta[0]), int(theta[1])
    return (t1, t2) in _LABEL_TO_INDEX


def label_index(theta) -> int:
    """Class index of a label vector, raising on unsupported labels."""
    t1, t2 = int(theta[0]), int(theta[1])
    try:
        return _LABEL_TO_INDEX[(t1, t2)]
    except KeyError:
        raise UnsupportedLabelError(
            f"label [{t1},{t2}] is not in the supported class set"
        ) from None


def label_of_index(idx: int) -> tuple[int, int]:
    return SUPPORTED_LABELS[int(idx)]
