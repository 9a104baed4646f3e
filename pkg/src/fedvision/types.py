"""Shared value types for images, boxes, annotations and dataset containers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RasterImage:
    """8-bit image stored as a (height, width, channels) uint8 array."""

    width: int
    height: int
    channels: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        expected = (self.height, self.width, self.channels)
        if self.pixels.shape != expected:
            raise ValueError(
                f"pixel array shape {self.pixels.shape} does not match {expected}"
            )
        if self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {self.pixels.dtype}")

    def copy(self) -> "RasterImage":
        return RasterImage(self.width, self.height, self.channels, self.pixels.copy())


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized center form (cx, cy, w, h)."""

    cx: float
    cy: float
    w: float
    h: float

    def corners(self) -> tuple[float, float, float, float]:
        """Return (x_min, y_min, x_max, y_max)."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class Annotation:
    """Ground-truth object: class 0 = rectangle (plate-like), 1 = disk (face-like)."""

    class_id: int
    box: BoundingBox


@dataclass(frozen=True)
class Detection:
    """Scored model output sharing the ground-truth box geometry."""

    class_id: int
    box: BoundingBox
    score: float


@dataclass
class Sample:
    """One image plus its annotations, identified by a stable string id."""

    id: str
    image: RasterImage
    annotations: list[Annotation] = field(default_factory=list)


@dataclass
class DatasetSplit:
    train: list[Sample]
    val: list[Sample]
    test: list[Sample]


@dataclass
class Partition:
    """Per-participant shards of the training set, disjoint by sample id."""

    shards: list[list[Sample]]

    @property
    def num_participants(self) -> int:
        return len(self.shards)
