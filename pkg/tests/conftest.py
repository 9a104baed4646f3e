"""Shared fixtures: tiny configs and hand-built samples keep unit tests fast."""

from __future__ import annotations

import numpy as np
import pytest

from fedvision.detector import ModelConfig, TrainConfig
from fedvision.types import Annotation, BoundingBox, RasterImage, Sample


def make_image(size: int, rng: np.random.Generator | None = None) -> RasterImage:
    if rng is None:
        pixels = np.full((size, size, 1), 128, dtype=np.uint8)
    else:
        pixels = rng.integers(0, 256, size=(size, size, 1)).astype(np.uint8)
    return RasterImage(size, size, 1, pixels)


def make_samples(n: int, size: int = 16, seed: int = 0, max_objects: int = 2) -> list[Sample]:
    """Random annotated samples without the full generator (any image size)."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        anns = []
        for _ in range(int(rng.integers(0, max_objects + 1))):
            cx, cy = rng.uniform(0.15, 0.85, 2)
            w, h = rng.uniform(0.1, 0.3, 2)
            anns.append(Annotation(int(rng.integers(0, 2)), BoundingBox(cx, cy, w, h)))
        out.append(Sample(f"m{i:04d}", make_image(size, rng), anns))
    return out


@pytest.fixture
def tiny_mc() -> ModelConfig:
    return ModelConfig(image_size=16, grid_s=2, num_classes=2, hidden_units=4, seed=0)


@pytest.fixture
def small_mc() -> ModelConfig:
    return ModelConfig(image_size=32, grid_s=4, num_classes=2, hidden_units=8, seed=1)


@pytest.fixture
def tiny_tc() -> TrainConfig:
    return TrainConfig(epochs=2, batch_size=4, learning_rate=0.05, seed=0)
