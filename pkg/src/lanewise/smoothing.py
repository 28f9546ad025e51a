"""Temporal fusion of per-frame class likelihoods.

The last p+1 likelihood vectors are combined with a slowly increasing
exponential weight kernel, normalized so the current frame carries weight
exactly 1, and the fused scores are argmaxed into a label. Isolated bad
frames are outvoted by the rest of the buffer.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError
from .labels import N_CLASSES, label_of_index
from .validation import check_likelihood

DEFAULT_RATE = 0.1
DEFAULT_BUFFER_DEPTH = 15


def kernel_weights(initial_value: float = 1.0, rate: float = DEFAULT_RATE, p: int = DEFAULT_BUFFER_DEPTH) -> np.ndarray:
    """Normalized weights for a p+1 frame buffer, oldest first.

    The raw kernel initial_value * (1 + rate)^i over i = 1..p+1 is divided
    by its newest term, so the result is (1 + rate)^(i - (p+1)); the
    initial value cancels and the newest weight is exactly 1.
    """
    if not initial_value > 0.0:
        raise InvalidInputError(f"initial_value must be > 0, got {initial_value!r}")
    if not rate > 0.0:
        raise InvalidInputError(f"rate must be > 0, got {rate!r}")
    if int(p) != p or p < 0:
        raise InvalidInputError(f"p must be an integer >= 0, got {p!r}")
    return (1.0 + rate) ** (np.arange(int(p) + 1, dtype=np.float64) - int(p))


@dataclass(frozen=True)
class SmoothingKernel:
    """Buffer depth p plus the normalized weight vector (length p+1)."""

    initial_value: float = 1.0
    rate: float = DEFAULT_RATE
    p: int = DEFAULT_BUFFER_DEPTH
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", kernel_weights(self.initial_value, self.rate, self.p))


def smooth_decide(
    buffer,
    kernel: SmoothingKernel,
    prev_index: int | None = None,
) -> tuple[tuple[int, int], np.ndarray, int]:
    """Fuse buffered likelihoods and pick the winning label.

    ``buffer`` holds up to p+1 likelihood vectors, oldest first. During
    warm-up (fewer than p+1 frames) the newest weights of the kernel are
    used, which keeps the current frame at weight 1. Ties go to
    ``prev_index`` when it is among the tied classes, else to the lowest
    class index.

    Returns (label, fused scores, winning class index).
    """
    vectors = [check_likelihood(v, N_CLASSES) for v in buffer]
    if not vectors:
        raise InvalidInputError("cannot decide on an empty likelihood buffer")
    if len(vectors) > kernel.p + 1:
        raise InvalidInputError(
            f"buffer holds {len(vectors)} frames but kernel supports {kernel.p + 1}"
        )
    weights = kernel.weights[-len(vectors):]
    fused = weights @ np.stack(vectors)
    top = fused.max()
    tied = np.nonzero(fused == top)[0]
    if prev_index is not None and prev_index in tied:
        winner = int(prev_index)
    else:
        winner = int(tied[0])
    return label_of_index(winner), fused, winner


class TemporalSmoother:
    """Per-stream smoothing state: a likelihood ring buffer plus tie memory.

    One instance per video stream; streams are independent of each other.
    """

    def __init__(self, kernel: SmoothingKernel | None = None):
        self.kernel = kernel if kernel is not None else SmoothingKernel()
        self._buffer: deque = deque(maxlen=self.kernel.p + 1)
        self._prev_index: int | None = None

    def update(self, likelihood) -> tuple[tuple[int, int], np.ndarray]:
        """Push the current frame's likelihood and return the fused decision."""
        self._buffer.append(check_likelihood(likelihood, N_CLASSES))
        label, fused, winner = smooth_decide(self._buffer, self.kernel, self._prev_index)
        self._prev_index = winner
        return label, fused

    def reset(self) -> None:
        self._buffer.clear()
        self._prev_index = None

    def __len__(self) -> int:
        return len(self._buffer)
