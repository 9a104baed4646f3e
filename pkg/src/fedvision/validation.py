"""Input validation helpers used at module boundaries.

Value types themselves stay permissive (metrics may build boxes outside the
unit square for geometry math); these checks enforce the dataset-facing
contracts where they matter.
"""

from __future__ import annotations

import math
from typing import Sequence

from .types import BoundingBox, RasterImage, Sample


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int,)) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value


def check_probability(value, name: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return v


def check_box(box: BoundingBox, name: str = "box") -> BoundingBox:
    """Enforce the normalized-annotation invariants on a box."""
    if not (0.0 <= box.cx <= 1.0 and 0.0 <= box.cy <= 1.0):
        raise ValueError(f"{name} center ({box.cx}, {box.cy}) outside unit square")
    if not (0.0 < box.w <= 1.0 and 0.0 < box.h <= 1.0):
        raise ValueError(f"{name} extent ({box.w}, {box.h}) outside (0, 1]")
    x0, y0, x1, y1 = box.corners()
    clipped_w = min(x1, 1.0) - max(x0, 0.0)
    clipped_h = min(y1, 1.0) - max(y0, 0.0)
    if clipped_w <= 0.0 or clipped_h <= 0.0:
        raise ValueError(f"{name} degenerates to zero area inside the unit square")
    return box


def check_image(image: RasterImage, name: str = "image") -> RasterImage:
    if not isinstance(image, RasterImage):
        raise ValueError(f"{name} must be a RasterImage, got {type(image).__name__}")
    # shape/dtype invariants are enforced by the RasterImage constructor
    return image


def check_samples(samples: Sequence[Sample], name: str = "samples") -> Sequence[Sample]:
    if len(samples) == 0:
        raise ValueError(f"{name} must be nonempty")
    for s in samples:
        if not isinstance(s, Sample):
            raise ValueError(f"{name} must contain Sample objects, got {type(s).__name__}")
    return samples


def check_fractions(ratios: Sequence[float], tol: float = 1e-9) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise ValueError(f"expected (train, val, test) fractions, got {len(ratios)} values")
    train_frac, val_frac, test_frac = (float(r) for r in ratios)
    for name, frac in (("train", train_frac), ("val", val_frac), ("test", test_frac)):
        if frac <= 0.0:
            raise ValueError(f"{name} fraction must be positive, got {frac}")
    total = train_frac + val_frac + test_frac
    if not math.isclose(total, 1.0, abs_tol=tol):
        raise ValueError(f"fractions must sum to 1.0 within {tol}, got {total}")
    return train_frac, val_frac, test_frac


def check_threshold(value, name: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return v
