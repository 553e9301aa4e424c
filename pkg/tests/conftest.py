import os

import numpy as np
import pytest
import torch

from ctxrestore.backbone import (
    ENV_WEIGHTS_DIR,
    FeatureBackbone,
    WEIGHTS_FILENAMES,
    resolve_weights_path,
    write_surrogate_weights,
)
from ctxrestore.errors import WeightsNotFoundError

# Keep CPU math reproducible regardless of the host's core count.
torch.set_num_threads(max(1, min(4, os.cpu_count() or 1)))


def make_texture(height, width, seed=0):
    """Deterministic banded texture with mild noise, in [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    img = np.zeros((height, width, 3), np.float32)
    for c in range(3):
        img[:, :, c] = (
            0.5
            + 0.25 * np.sin(2 * np.pi * (xx * rng.uniform(2, 6) / width + rng.uniform()))
            + 0.2 * np.cos(2 * np.pi * (yy * rng.uniform(2, 6) / height + rng.uniform()))
        )
    img += rng.normal(0.0, 0.05, img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0)


@pytest.fixture(scope="session")
def weights_file(tmp_path_factory):
    """A backbone checkpoint: the real cached one if present, else a seeded
    surrogate written once per session."""
    try:
        return resolve_weights_path()
    except WeightsNotFoundError:
        path = tmp_path_factory.mktemp("weights") / WEIGHTS_FILENAMES[1]
        write_surrogate_weights(path, seed=0)
        return path


@pytest.fixture(scope="session")
def backbone(weights_file):
    return FeatureBackbone(weights_path=str(weights_file))


@pytest.fixture()
def weights_env(weights_file, monkeypatch):
    """Point the environment at the session weights cache."""
    monkeypatch.setenv(ENV_WEIGHTS_DIR, str(weights_file.parent))
    return weights_file


@pytest.fixture()
def texture64():
    return make_texture(64, 64, seed=1)


@pytest.fixture()
def texture128():
    return make_texture(128, 128, seed=3)
