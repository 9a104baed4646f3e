"""Gaussian-blur anonymization of detected regions.

Blur strength follows box size (max side / 6, floored at 2 px) so the
obfuscation scales with the object. Every region is filtered from the
ORIGINAL image with clamp-to-edge sampling, so overlapping boxes produce the
same output regardless of order, and filtered values are rounded to the
nearest integer with ties away from zero for bit-exact outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import detector
from .types import BoundingBox, Detection, RasterImage
from .validation import check_image

SIGMA_FLOOR = 2.0
SIGMA_DIVISOR = 6.0
DEFAULT_PAD_FRAC = 0.10


@dataclass(frozen=True)
class GaussianKernel:
    """Separable 1-D kernel sampled at integer offsets -radius..radius."""

    sigma: float
    radius: int
    weights: np.ndarray

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("kernel weights must sum to 1")


def build_kernel(sigma: float) -> GaussianKernel:
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    weights /= weights.sum()
    return GaussianKernel(sigma=sigma, radius=radius, weights=weights)


def default_sigma_rule(box_w_px: float, box_h_px: float) -> float:
    return max(SIGMA_FLOOR, max(box_w_px, box_h_px) / SIGMA_DIVISOR)


SigmaRule = Callable[[float, float], float]


def box_pixel_rect(box: BoundingBox, image: RasterImage) -> tuple[int, int, int, int]:
    """Denormalize to an inclusive pixel rect clipped to the image.

    Raises if the box misses the image entirely.
    """
    x_min, y_min, x_max, y_max = box.corners()
    x0 = math.floor(x_min * image.width)
    y0 = math.floor(y_min * image.height)
    x1 = math.ceil(x_max * image.width) - 1
    y1 = math.ceil(y_max * image.height) - 1
    if x1 < 0 or y1 < 0 or x0 >= image.width or y0 >= image.height:
        raise ValueError("box lies fully outside the image")
    return (
        max(x0, 0),
        max(y0, 0),
        min(x1, image.width - 1),
        min(y1, image.height - 1),
    )


def blur_region(
    image: RasterImage,
    box: BoundingBox,
    sigma_rule: SigmaRule = default_sigma_rule,
) -> RasterImage:
    """Replace the pixels inside the denormalized box with their
    Gaussian-filtered values; everything outside is byte-identical."""
    check_image(image)
    out = image.copy()
    _blur_into(out.pixels, image.pixels, box, image, sigma_rule)
    return out


def _blur_into(
    dest: np.ndarray,
    source: np.ndarray,
    box: BoundingBox,
    image: RasterImage,
    sigma_rule: SigmaRule,
) -> tuple[tuple[int, int, int, int], float]:
    x0, y0, x1, y1 = box_pixel_rect(box, image)
    sigma = sigma_rule(box.w * image.width, box.h * image.height)
    kernel = build_kernel(sigma)
    r = kernel.radius
    w = kernel.weights
    ny, nx = y1 - y0 + 1, x1 - x0 + 1

    for channel in range(image.channels):
        plane = source[:, :, channel].astype(np.float64)
        padded = np.pad(plane, r, mode="edge")
        # horizontal pass over the rows the vertical pass will need
        horiz = np.zeros((ny + 2 * r, nx))
        for k in range(2 * r + 1):
            horiz += w[k] * padded[y0 : y0 + ny + 2 * r, x0 + k : x0 + k + nx]
        blurred = np.zeros((ny, nx))
        for k in range(2 * r + 1):
            blurred += w[k] * horiz[k : k + ny, :]
        # round half away from zero (values are nonnegative, so +0.5 floor)
        dest[y0 : y1 + 1, x0 : x1 + 1, channel] = np.floor(blurred + 0.5).astype(
            np.uint8
        )
    return (x0, y0, x1, y1), sigma


@dataclass
class AnonymizationReport:
    blurred_boxes: list[tuple[BoundingBox, float]]  # (padded box, sigma used)
    pixels_modified: int


def pad_box(box: BoundingBox, pad_frac: float) -> BoundingBox:
    """Grow each side by pad_frac of the box size, clipped to the unit square."""
    x0, y0, x1, y1 = box.corners()
    x0 = max(0.0, x0 - box.w * pad_frac)
    x1 = min(1.0, x1 + box.w * pad_frac)
    y0 = max(0.0, y0 - box.h * pad_frac)
    y1 = min(1.0, y1 + box.h * pad_frac)
    return BoundingBox((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)


def anonymize_detections(
    image: RasterImage,
    detections: Sequence[Detection],
    sigma_rule: SigmaRule = default_sigma_rule,
    pad_frac: float = DEFAULT_PAD_FRAC,
) -> tuple[RasterImage, AnonymizationReport]:
    """Blur the padded region of every detection, reading the original only."""
    check_image(image)
    out = image.copy()
    written = np.zeros((image.height, image.width), dtype=bool)
    blurred: list[tuple[BoundingBox, float]] = []
    for det in detections:
        padded = pad_box(det.box, pad_frac)
        rect, sigma = _blur_into(out.pixels, image.pixels, padded, image, sigma_rule)
        x0, y0, x1, y1 = rect
        written[y0 : y1 + 1, x0 : x1 + 1] = True
        blurred.append((padded, sigma))
    return out, AnonymizationReport(
        blurred_boxes=blurred, pixels_modified=int(written.sum())
    )


def anonymize_image(
    params: detector.ParamVector,
    image: RasterImage,
    config: detector.ModelConfig,
    score_threshold: float = 0.25,
    nms_iou: float = 0.5,
    sigma_rule: SigmaRule = default_sigma_rule,
    pad_frac: float = DEFAULT_PAD_FRAC,
) -> tuple[RasterImage, AnonymizationReport]:
    """Detect sensitive regions with the model, then blur them."""
    detections = detector.predict(params, image, config, score_threshold, nms_iou)
    return anonymize_detections(image, detections, sigma_rule, pad_frac)


def outline_regions(
    image: RasterImage,
    boxes: Sequence[BoundingBox],
    channel: int | None = None,
) -> RasterImage:
    """Debug view: draw a max-intensity 1-px border around each box.

    For 3-channel images the border lands on the green channel by default.
    """
    check_image(image)
    out = image.copy()
    if channel is None:
        channel = 1 if image.channels == 3 else 0
    for box in boxes:
        x0, y0, x1, y1 = box_pixel_rect(box, image)
        out.pixels[y0, x0 : x1 + 1, channel] = 255
        out.pixels[y1, x0 : x1 + 1, channel] = 255
        out.pixels[y0 : y1 + 1, x0, channel] = 255
        out.pixels[y0 : y1 + 1, x1, channel] = 255
    return out
