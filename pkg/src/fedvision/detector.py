"""Single-pass grid object detector: a tiny MLP with analytic gradients.

Architecture: flatten pixels scaled to [0, 1] -> one tanh hidden layer ->
linear head of size grid_s^2 * (1 + num_classes + 4). Cells are indexed
row-major; each cell's slice is [objectness_logit, class_logits...,
tx, ty, tw, th]. Activations: sigmoid on objectness and the four box
fields, softmax over the class logits. (tx, ty) are offsets of the box
center within its cell; (tw, th) are global normalized extents.

The parameter vector is one flat float64 array laid out as
[W1 row-major (D x H), b1 (H), W2 row-major (H x O), b2 (O)].

Loss per image: summed stable binary cross-entropy on objectness over all
cells (target 1 exactly for the cell holding a ground-truth box center),
plus, for those positive cells, class cross-entropy and a box term
BOX_LOSS_WEIGHT * squared error on (tx, ty, sqrt(w), sqrt(h)); the batch
loss is the mean over images, so duplicating the batch changes nothing.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .types import BoundingBox, Detection, RasterImage, Sample
from .validation import check_threshold

ParamVector = np.ndarray

BOX_LOSS_WEIGHT = 5.0
OBJECTNESS_BIAS_INIT = -2.0


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    grid_s: int = 4
    num_classes: int = 2
    hidden_units: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 1 or self.image_size % self.grid_s != 0:
            raise ValueError(
                f"image_size ({self.image_size}) must be a positive multiple of "
                f"grid_s ({self.grid_s})"
            )
        if self.hidden_units < 1:
            raise ValueError(f"hidden_units must be >= 1, got {self.hidden_units}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")

    @property
    def cell_fields(self) -> int:
        return 1 + self.num_classes + 4

    @property
    def num_cells(self) -> int:
        return self.grid_s * self.grid_s

    @property
    def input_dim(self) -> int:
        return self.image_size * self.image_size

    @property
    def output_dim(self) -> int:
        return self.num_cells * self.cell_fields


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 10
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        # learning_rate 0 is allowed as an explicit no-op (zero step size)
        if not 0.0 <= self.learning_rate < 1.0:
            raise ValueError(
                f"learning_rate must lie in [0, 1), got {self.learning_rate}"
            )


def param_count(config: ModelConfig) -> int:
    d, h, o = config.input_dim, config.hidden_units, config.output_dim
    return d * h + h + h * o + o


def init_model(config: ModelConfig) -> ParamVector:
    """Deterministic init: 1/sqrt(fan_in)-scaled weights, zero biases except
    objectness biases, which start at OBJECTNESS_BIAS_INIT (prior to "no
    object")."""
    d, h, o = config.input_dim, config.hidden_units, config.output_dim
    rng = np.random.default_rng(config.seed)
    w1 = rng.standard_normal((d, h)) / np.sqrt(d)
    w2 = rng.standard_normal((h, o)) / np.sqrt(h)
    b1 = np.zeros(h)
    b2 = np.zeros(o)
    b2[0 :: config.cell_fields] = OBJECTNESS_BIAS_INIT
    return np.concatenate([w1.ravel(), b1, w2.ravel(), b2])


def unpack_params(params: ParamVector, config: ModelConfig):
    """Reshape the flat vector into (W1, b1, W2, b2) views (no copies)."""
    d, h, o = config.input_dim, config.hidden_units, config.output_dim
    if params.shape != (param_count(config),):
        raise ValueError(
            f"parameter vector has length {params.shape}, expected ({param_count(config)},)"
        )
    i = 0
    w1 = params[i : i + d * h].reshape(d, h)
    i += d * h
    b1 = params[i : i + h]
    i += h
    w2 = params[i : i + h * o].reshape(h, o)
    i += h * o
    b2 = params[i : i + o]
    return w1, b1, w2, b2


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _bce_with_logits(z: np.ndarray, target: np.ndarray) -> np.ndarray:
    # stable form: max(z,0) - z*t + log(1 + exp(-|z|))
    return np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z)))


def image_features(image: RasterImage, config: ModelConfig) -> np.ndarray:
    if image.channels != 1:
        raise ValueError("detector requires single-channel images")
    if image.width != config.image_size or image.height != config.image_size:
        raise ValueError(
            f"image is {image.width}x{image.height}, config expects "
            f"{config.image_size}x{config.image_size}"
        )
    return image.pixels.reshape(-1).astype(np.float64) / 255.0


@dataclass(frozen=True)
class GridOutput:
    """Per-cell activations for one image (cells indexed row-major)."""

    objectness: np.ndarray  # (num_cells,)
    class_probs: np.ndarray  # (num_cells, num_classes)
    box_fields: np.ndarray  # (num_cells, 4): (tx, ty, w, h), all sigmoided


def forward(params: ParamVector, image: RasterImage, config: ModelConfig) -> GridOutput:
    x = image_features(image, config)[None, :]
    raw = _forward_raw(params, x, config)[1][0]
    cells = raw.reshape(config.num_cells, config.cell_fields)
    return GridOutput(
        objectness=_sigmoid(cells[:, 0]),
        class_probs=_softmax(cells[:, 1 : 1 + config.num_classes]),
        box_fields=_sigmoid(cells[:, 1 + config.num_classes :]),
    )


def _forward_raw(params: ParamVector, x: np.ndarray, config: ModelConfig):
    w1, b1, w2, b2 = unpack_params(params, config)
    hidden = np.tanh(x @ w1 + b1)
    logits = hidden @ w2 + b2
    return hidden, logits


def build_targets(samples: Sequence[Sample], config: ModelConfig):
    """Per-image cell targets: objectness mask, class index and box targets.

    A cell is positive when a ground-truth box center falls in it; with
    multiple annotations in the same cell the later one wins (the data
    generator avoids such collisions).
    """
    s = config.grid_s
    n = len(samples)
    g = config.num_cells
    t_obj = np.zeros((n, g))
    t_cls = np.zeros((n, g), dtype=np.int64)
    t_box = np.zeros((n, g, 4))
    for i, sample in enumerate(samples):
        for ann in sample.annotations:
            col = min(int(ann.box.cx * s), s - 1)
            row = min(int(ann.box.cy * s), s - 1)
            cell = row * s + col
            t_obj[i, cell] = 1.0
            t_cls[i, cell] = ann.class_id
            t_box[i, cell] = (
                ann.box.cx * s - col,
                ann.box.cy * s - row,
                np.sqrt(ann.box.w),
                np.sqrt(ann.box.h),
            )
    return t_obj, t_cls, t_box


def loss(
    params: ParamVector, batch: Sequence[Sample], config: ModelConfig
) -> tuple[float, ParamVector]:
    """Mean per-image loss over the batch and its analytic gradient."""
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    x = np.stack([image_features(s.image, config) for s in batch])
    targets = build_targets(batch, config)
    return _loss_core(params, x, targets, config)


def _loss_core(params, x, targets, config) -> tuple[float, ParamVector]:
    t_obj, t_cls, t_box = targets
    n = x.shape[0]
    g, c = config.num_cells, config.num_classes
    hidden, logits = _forward_raw(params, x, config)
    cells = logits.reshape(n, g, config.cell_fields)

    z_obj = cells[:, :, 0]
    z_cls = cells[:, :, 1 : 1 + c]
    z_box = cells[:, :, 1 + c :]

    p_obj = _sigmoid(z_obj)
    p_cls = _softmax(z_cls)
    p_box = _sigmoid(z_box)

    obj_loss = _bce_with_logits(z_obj, t_obj).sum(axis=1)

    pos = t_obj > 0.5
    log_p = np.log(np.take_along_axis(p_cls, t_cls[:, :, None], axis=2)[:, :, 0])
    cls_loss = np.where(pos, -log_p, 0.0).sum(axis=1)

    sqrt_wh = np.sqrt(p_box[:, :, 2:])
    resid = np.concatenate([p_box[:, :, :2] - t_box[:, :, :2], sqrt_wh - t_box[:, :, 2:]], axis=2)
    box_loss = BOX_LOSS_WEIGHT * np.where(pos[:, :, None], resid**2, 0.0).sum(axis=(1, 2))

    total = float(np.mean(obj_loss + cls_loss + box_loss))

    # gradient w.r.t. the head logits, assembled per cell field
    d_cells = np.zeros_like(cells)
    d_cells[:, :, 0] = p_obj - t_obj
    one_hot = np.zeros_like(p_cls)
    np.put_along_axis(one_hot, t_cls[:, :, None], 1.0, axis=2)
    d_cells[:, :, 1 : 1 + c] = np.where(pos[:, :, None], p_cls - one_hot, 0.0)
    sig_grad = p_box * (1.0 - p_box)
    d_xy = 2.0 * BOX_LOSS_WEIGHT * resid[:, :, :2] * sig_grad[:, :, :2]
    # d/dz (sqrt(s) - t)^2 = (sqrt(s) - t) * (1 - s) * sqrt(s) with s = sigmoid(z)
    d_wh = 2.0 * BOX_LOSS_WEIGHT * resid[:, :, 2:] * (1.0 - p_box[:, :, 2:]) * sqrt_wh / 2.0
    d_cells[:, :, 1 + c :] = np.where(pos[:, :, None], np.concatenate([d_xy, d_wh], axis=2), 0.0)

    d_logits = d_cells.reshape(n, config.output_dim)
    w1, b1, w2, b2 = unpack_params(params, config)
    g_w2 = hidden.T @ d_logits / n
    g_b2 = d_logits.sum(axis=0) / n
    d_hidden = (d_logits @ w2.T) * (1.0 - hidden**2)
    g_w1 = x.T @ d_hidden / n
    g_b1 = d_hidden.sum(axis=0) / n
    grad = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])
    return total, grad


def train_local(
    params: ParamVector,
    shard: Sequence[Sample],
    tc: TrainConfig,
    config: ModelConfig,
) -> tuple[ParamVector, list[float]]:
    """Minibatch SGD over the shard; pure with respect to `params`.

    Epoch e shuffles with seed tc.seed + e; batches are consecutive slices of
    that permutation (the final short batch included). Returns the trained
    parameters and the per-epoch mean loss (example-weighted over batches,
    each recorded before its step).
    """
    if len(shard) == 0:
        raise ValueError("shard must be nonempty")
    x = np.stack([image_features(s.image, config) for s in shard])
    t_obj, t_cls, t_box = build_targets(shard, config)
    params = params.copy()
    history: list[float] = []
    n = len(shard)
    for epoch in range(tc.epochs):
        order = np.random.default_rng(tc.seed + epoch).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, tc.batch_size):
            idx = order[start : start + tc.batch_size]
            batch_targets = (t_obj[idx], t_cls[idx], t_box[idx])
            value, grad = _loss_core(params, x[idx], batch_targets, config)
            params -= tc.learning_rate * grad
            epoch_loss += value * len(idx)
        history.append(epoch_loss / n)
    return params, history


def predict(
    params: ParamVector,
    image: RasterImage,
    config: ModelConfig,
    score_threshold: float = 0.25,
    nms_iou: float = 0.5,
) -> list[Detection]:
    """Scored detections: per-cell score = objectness * best class prob,
    thresholded, then greedy per-class NMS; sorted by descending score."""
    return predict_batch(params, [image], config, score_threshold, nms_iou)[0]


def predict_batch(
    params: ParamVector,
    images: Sequence[RasterImage],
    config: ModelConfig,
    score_threshold: float = 0.25,
    nms_iou: float = 0.5,
) -> list[list[Detection]]:
    """predict() over many images with one batched forward pass."""
    check_threshold(score_threshold, "score_threshold")
    check_threshold(nms_iou, "nms_iou")
    x = np.stack([image_features(img, config) for img in images])
    _, logits = _forward_raw(params, x, config)
    cells = logits.reshape(len(images), config.num_cells, config.cell_fields)
    objectness = _sigmoid(cells[:, :, 0])
    class_probs = _softmax(cells[:, :, 1 : 1 + config.num_classes])
    box_fields = _sigmoid(cells[:, :, 1 + config.num_classes :])
    s = config.grid_s
    results: list[list[Detection]] = []
    for i in range(len(images)):
        candidates: list[Detection] = []
        for cell in range(config.num_cells):
            best_class = int(np.argmax(class_probs[i, cell]))
            score = float(objectness[i, cell] * class_probs[i, cell, best_class])
            if score <= score_threshold:
                continue
            tx, ty, w, h = box_fields[i, cell]
            row, col = divmod(cell, s)
            box = BoundingBox((col + tx) / s, (row + ty) / s, float(w), float(h))
            candidates.append(Detection(best_class, box, score))
        candidates.sort(key=lambda d: -d.score)
        kept: list[Detection] = []
        for det in candidates:
            if any(
                k.class_id == det.class_id and _box_iou(k.box, det.box) > nms_iou
                for k in kept
            ):
                continue
            kept.append(det)
        results.append(kept)
    return results


def _box_iou(a: BoundingBox, b: BoundingBox) -> float:
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area() + b.area() - inter)


# ---------------------------------------------------------------------------
# checkpoint / wire serialization: 8-byte little-endian count, 16-byte config
# fingerprint, then the raw little-endian float64 values


def config_fingerprint(config: ModelConfig) -> bytes:
    text = (
        f"{config.image_size}|{config.grid_s}|{config.num_classes}|"
        f"{config.hidden_units}|{config.seed}"
    )
    return hashlib.blake2b(text.encode(), digest_size=16).digest()


def serialize_params(params: ParamVector, config: ModelConfig) -> bytes:
    header = struct.pack("<Q", params.shape[0])
    return header + config_fingerprint(config) + params.astype("<f8").tobytes()


def deserialize_params(
    blob: bytes, expected_config: ModelConfig | None = None
) -> tuple[ParamVector, bytes]:
    if len(blob) < 24:
        raise ValueError("parameter blob shorter than its 24-byte header")
    (count,) = struct.unpack("<Q", blob[:8])
    fingerprint = blob[8:24]
    body = blob[24:]
    if len(body) != 8 * count:
        raise ValueError(
            f"parameter blob declares {count} values but carries {len(body) // 8}"
        )
    if expected_config is not None and fingerprint != config_fingerprint(expected_config):
        raise ValueError("checkpoint fingerprint does not match the model config")
    params = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return params, fingerprint


def save_checkpoint(params: ParamVector, config: ModelConfig, path: str | Path) -> None:
    Path(path).write_bytes(serialize_params(params, config))


def load_checkpoint(
    path: str | Path, expected_config: ModelConfig | None = None
) -> ParamVector:
    params, _ = deserialize_params(Path(path).read_bytes(), expected_config)
    return params


def timed_train_local(params, shard, tc, config):
    """train_local plus its wall-clock duration (used for report rows)."""
    start = time.perf_counter()
    trained, history = train_local(params, shard, tc, config)
    return trained, history, time.perf_counter() - start
