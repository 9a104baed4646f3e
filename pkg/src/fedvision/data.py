"""Synthetic shape dataset: generation, splitting, sharding and disk layout.

Images are noisy grayscale backgrounds with bright filled shapes:
axis-aligned rectangles (class 0) and disks (class 1). The background base
level varies per image over [90, 160] with per-pixel jitter, so absolute
intensity carries no signal and the detector must key on local contrast;
shapes sit 80-95 levels above the base (clipped at 255), keeping at least
60 levels of worst-case contrast against the jittered surround. The two
classes also differ in shape prior: rectangles are distinctly wide
(plate-like) while disks stay round and compact (face-like). Each shape
carries a normalized center-form bounding box annotation.

The generator guarantees shape centers land in distinct cells of a 4-by-4
grid, matching the default detector grid, so the one-box-per-cell training
assignment never collides.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .netpbm import read_netpbm, write_netpbm
from .types import Annotation, BoundingBox, DatasetSplit, Partition, RasterImage, Sample
from .validation import check_fractions, check_positive_int, check_samples

# grid used to keep shape centers in distinct cells (= default detector grid)
_COLLISION_GRID = 4
# shapes are at least this much brighter/darker than the background base;
# with +-20 pixel jitter the worst-case local contrast is still >= 60 levels
_MIN_SHAPE_OFFSET = 80
_MAX_SHAPE_OFFSET = 95
_PLACEMENT_ATTEMPTS = 40

DEFAULT_RATIOS = (0.488, 0.130, 0.382)


def generate_dataset(
    count: int,
    image_size: int = 64,
    max_objects: int = 3,
    seed: int = 0,
) -> list[Sample]:
    """Generate `count` annotated samples, deterministically from `seed`.

    Each sample draws 0..max_objects shapes; a sample's content depends only
    on (seed, its index, image_size, max_objects), so prefixes are stable
    across different counts.
    """
    check_positive_int(count, "count")
    check_positive_int(max_objects, "max_objects")
    if image_size < 32:
        raise ValueError(f"image_size must be >= 32, got {image_size}")
    return [
        _generate_sample(i, image_size, max_objects, seed) for i in range(count)
    ]


def _generate_sample(index: int, size: int, max_objects: int, seed: int) -> Sample:
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index]))
    base = int(rng.integers(90, 161))
    img = base + rng.integers(-20, 21, size=(size, size), dtype=np.int64)
    img = np.clip(img, 0, 255)

    num_shapes = int(rng.integers(0, max_objects + 1))
    annotations: list[Annotation] = []
    boxes_px: list[tuple[int, int, int, int]] = []  # (x0, y0, x1, y1) inclusive
    cells_used: set[tuple[int, int]] = set()

    for _ in range(num_shapes):
        for _attempt in range(_PLACEMENT_ATTEMPTS):
            class_id = int(rng.integers(0, 2))
            offset = int(rng.integers(_MIN_SHAPE_OFFSET, _MAX_SHAPE_OFFSET + 1))
            intensity = int(min(base + offset, 255))

            if class_id == 0:
                w = int(rng.integers(size // 4, size * 13 // 32 + 1))
                h = int(rng.integers(size * 7 // 64, size * 5 // 32 + 1))
                x0 = int(rng.integers(1, size - w - 1))
                y0 = int(rng.integers(1, size - h - 1))
                rect = (x0, y0, x0 + w - 1, y0 + h - 1)
                center = (x0 + w / 2.0, y0 + h / 2.0)
                box = BoundingBox(center[0] / size, center[1] / size, w / size, h / size)
            else:
                r = int(rng.integers(max(3, size // 16), size * 7 // 64 + 1))
                cx = int(rng.integers(r + 1, size - r - 1))
                cy = int(rng.integers(r + 1, size - r - 1))
                rect = (cx - r, cy - r, cx + r, cy + r)
                center = (cx + 0.5, cy + 0.5)
                d = 2 * r + 1
                box = BoundingBox(center[0] / size, center[1] / size, d / size, d / size)

            if not _placement_ok(rect, center, boxes_px, cells_used, size):
                continue

            if class_id == 0:
                img[rect[1] : rect[3] + 1, rect[0] : rect[2] + 1] = intensity
            else:
                yy, xx = np.ogrid[:size, :size]
                mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
                img[mask] = intensity

            boxes_px.append(rect)
            cell = (
                int(center[1] * _COLLISION_GRID / size),
                int(center[0] * _COLLISION_GRID / size),
            )
            cells_used.add(cell)
            annotations.append(Annotation(class_id, box))
            break

    image = RasterImage(size, size, 1, img.astype(np.uint8).reshape(size, size, 1))
    return Sample(id=f"s{index:06d}", image=image, annotations=annotations)


def _placement_ok(rect, center, existing, cells_used, size) -> bool:
    cell = (
        int(center[1] * _COLLISION_GRID / size),
        int(center[0] * _COLLISION_GRID / size),
    )
    if cell in cells_used:
        return False
    x0, y0, x1, y1 = rect
    for ex0, ey0, ex1, ey1 in existing:
        # reject overlap, with a one-pixel separation margin
        if x0 <= ex1 + 1 and ex0 <= x1 + 1 and y0 <= ey1 + 1 and ey0 <= y1 + 1:
            return False
    return True


def split_dataset(
    samples: Sequence[Sample],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    """Shuffle deterministically, then slice.

    Sizes are round(count * frac) for train and val; the remainder goes to
    test. Fractions must be positive and sum to 1 within 1e-9.
    """
    check_samples(samples)
    train_frac, val_frac, _ = check_fractions(ratios)
    order = np.random.default_rng(seed).permutation(len(samples))
    shuffled = [samples[i] for i in order]
    n_train = round(len(samples) * train_frac)
    n_val = round(len(samples) * val_frac)
    if n_train + n_val > len(samples):
        raise ValueError("rounded train+val sizes exceed the sample count")
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
    )


def partition_iid(
    train: Sequence[Sample], num_participants: int, seed: int = 0
) -> Partition:
    """Deterministic shuffle followed by round-robin assignment.

    Shard sizes differ by at most one; shards are disjoint and cover the
    input exactly. A single participant receives the training set in its
    original order, which keeps one-client federated runs bit-comparable
    to centralized training over the same list.
    """
    check_samples(train, "train")
    check_positive_int(num_participants, "num_participants")
    if num_participants > len(train):
        raise ValueError(
            f"num_participants ({num_participants}) exceeds training size ({len(train)})"
        )
    if num_participants == 1:
        return Partition(shards=[list(train)])
    order = np.random.default_rng(seed).permutation(len(train))
    shards: list[list[Sample]] = [[] for _ in range(num_participants)]
    for pos, idx in enumerate(order):
        shards[pos % num_participants].append(train[idx])
    return Partition(shards=shards)


# ---------------------------------------------------------------------------
# disk layout: images/<id>.pgm + labels/<id>.txt + manifest.json


def save_dataset(split: DatasetSplit, out_dir: str | Path) -> Path:
    """Persist a split as netpbm images, sidecar label files and a manifest.

    Label lines are `class_id cx cy w h` with six fractional digits. The
    manifest records split membership by sample id and is written with a
    stable key order so reruns hash identically.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)

    names = ("train", "val", "test")
    manifest = {
        "image_size": None,
        "splits": {},
    }
    for name, samples in zip(names, (split.train, split.val, split.test)):
        manifest["splits"][name] = [s.id for s in samples]
        for sample in samples:
            if manifest["image_size"] is None:
                manifest["image_size"] = sample.image.width
            write_netpbm(sample.image, out / "images" / f"{sample.id}.pgm")
            lines = [
                f"{a.class_id} {a.box.cx:.6f} {a.box.cy:.6f} {a.box.w:.6f} {a.box.h:.6f}"
                for a in sample.annotations
            ]
            (out / "labels" / f"{sample.id}.txt").write_text(
                "".join(line + "\n" for line in lines)
            )
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_dataset(data_dir: str | Path) -> DatasetSplit:
    root = Path(data_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    parts = {}
    for name in ("train", "val", "test"):
        parts[name] = [_load_sample(root, sid) for sid in manifest["splits"][name]]
    return DatasetSplit(**parts)


def _load_sample(root: Path, sample_id: str) -> Sample:
    image = read_netpbm(root / "images" / f"{sample_id}.pgm")
    annotations = []
    label_path = root / "labels" / f"{sample_id}.txt"
    for line in label_path.read_text().splitlines():
        if not line.strip():
            continue
        fields = line.split()
        annotations.append(
            Annotation(
                int(fields[0]),
                BoundingBox(*(float(v) for v in fields[1:5])),
            )
        )
    return Sample(id=sample_id, image=image, annotations=annotations)


def manifest_digest(data_dir: str | Path) -> str:
    """Hex digest of the manifest file bytes (rerun-determinism check)."""
    data = (Path(data_dir) / "manifest.json").read_bytes()
    return hashlib.sha256(data).hexdigest()
