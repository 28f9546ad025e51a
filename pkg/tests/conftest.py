import numpy as np
import pytest

from lanewise.classifier import LinearSvmModel
from lanewise.config import RunConfig
from lanewise.features import frame_features
from lanewise.labels import SUPPORTED_LABELS
from lanewise.pipeline import SelfPositioningPipeline
from lanewise.preprocess import binarize, guided_filter
from lanewise.synth import ClipSpec, SceneGeometry, generate_clip


@pytest.fixture(scope="session")
def geometry():
    return SceneGeometry()


@pytest.fixture(scope="session")
def truth_offsets(geometry):
    return geometry.truth_offsets()


def extract_clip_features(data, config=None):
    """Per-frame descriptors for a rendered clip using the real loop."""
    cfg = config or RunConfig()
    pipe = SelfPositioningPipeline(model=None, offsets=data.model.offsets, config=cfg)
    rows = []
    for frame in data.frames:
        mask = binarize(frame, guided_filter(frame))
        model = pipe.fit_frame_model(mask)
        rows.append(frame_features(frame, mask, model))
    return np.array(rows)


@pytest.fixture(scope="session")
def trained_svm(geometry):
    """A small but competent classifier shared by the pipeline tests."""
    X, y = [], []
    for ci, theta in enumerate(SUPPORTED_LABELS):
        for k in range(2):
            data = generate_clip(
                ClipSpec(clip_id=f"fit{ci}_{k}", theta=theta, n_frames=6),
                geometry,
                seed=11 + k,
            )
            X.append(extract_clip_features(data))
            y.extend([ci] * 6)
    return LinearSvmModel(epochs=20, seed=0).fit(np.vstack(X), np.array(y))
