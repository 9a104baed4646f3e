"""Detection evaluation: IoU, greedy matching, AP, mAP50 / mAP50-95.

AP uses all-point interpolation (area under the precision envelope).
Conventions: precision is 1.0 when there are no detections at all, and a
class with zero ground-truth instances gets AP 0.0 with a warning flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import detector
from .types import Annotation, BoundingBox, Detection, Sample
from .validation import check_threshold

MAP_50_95_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
PR_SCORE_THRESHOLD = 0.25
AP_SCORE_FLOOR = 1e-3  # predict threshold used when collecting detections for AP


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; scale-invariant, 0.0 for disjoint boxes."""
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area() + b.area() - inter
    return inter / union


@dataclass
class MatchSet:
    """Outcome of matching one image's detections against its truths."""

    pairs: list[tuple[int, int, float]] = field(default_factory=list)  # (det, truth, iou)
    unmatched_detections: list[int] = field(default_factory=list)
    unmatched_truths: list[int] = field(default_factory=list)

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_detections)

    @property
    def fn(self) -> int:
        return len(self.unmatched_truths)


def match_detections(
    dets: Sequence[Detection],
    truths: Sequence[Annotation],
    iou_threshold: float = 0.5,
) -> MatchSet:
    """Greedy per-class matching, detections visited in descending score.

    Each detection claims the still-unmatched same-class truth of highest
    IoU >= threshold; ties break toward the lowest truth index.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(truths)
    result = MatchSet()
    for det_idx in order:
        det = dets[det_idx]
        best_iou, best_truth = 0.0, -1
        for t_idx, truth in enumerate(truths):
            if taken[t_idx] or truth.class_id != det.class_id:
                continue
            overlap = iou(det.box, truth.box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou, best_truth = overlap, t_idx
        if best_truth >= 0:
            taken[best_truth] = True
            result.pairs.append((det_idx, best_truth, best_iou))
        else:
            result.unmatched_detections.append(det_idx)
    result.unmatched_truths = [i for i, t in enumerate(taken) if not t]
    return result


def average_precision(
    dets_per_image: Sequence[Sequence[Detection]],
    truths_per_image: Sequence[Sequence[Annotation]],
    class_id: int,
    iou_threshold: float = 0.5,
) -> tuple[float, bool]:
    """All-point interpolated AP for one class over a dataset.

    Returns (ap, no_ground_truth_flag); the flag marks the zero-truth
    convention where AP is defined as 0.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    truths = [
        [a for a in anns if a.class_id == class_id] for anns in truths_per_image
    ]
    npos = sum(len(t) for t in truths)
    flat: list[tuple[float, int, int]] = []  # (-score, image, det index in image)
    for img, dets in enumerate(dets_per_image):
        for j, det in enumerate(dets):
            if det.class_id == class_id:
                flat.append((-det.score, img, j))
    if npos == 0:
        return 0.0, True
    if not flat:
        return 0.0, False
    flat.sort()

    taken = [[False] * len(t) for t in truths]
    tp = np.zeros(len(flat))
    for rank, (neg_score, img, j) in enumerate(flat):
        det = dets_per_image[img][j]
        best_iou, best_truth = 0.0, -1
        for t_idx, truth in enumerate(truths[img]):
            if taken[img][t_idx]:
                continue
            overlap = iou(det.box, truth.box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou, best_truth = overlap, t_idx
        if best_truth >= 0:
            taken[img][best_truth] = True
            tp[rank] = 1.0

    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / npos
    precision = cum_tp / (cum_tp + cum_fp)
    return _envelope_area(recall, precision), False


def _envelope_area(recall: np.ndarray, precision: np.ndarray) -> float:
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


@dataclass(frozen=True)
class EvalResult:
    map50: float
    map50_95: float
    recall: float
    precision: float
    mean_loss: float
    zero_truth_classes: tuple[int, ...] = ()


def evaluate_detections(
    dets_per_image: Sequence[Sequence[Detection]],
    truths_per_image: Sequence[Sequence[Annotation]],
    num_classes: int = 2,
    mean_loss: float = 0.0,
    pr_score_threshold: float = PR_SCORE_THRESHOLD,
) -> EvalResult:
    """Metrics from precomputed detections (also backs the oracle-detector
    plumbing path that feeds ground truth straight through)."""
    ap_sum = np.zeros(len(MAP_50_95_THRESHOLDS))
    flagged: list[int] = []
    for class_id in range(num_classes):
        for k, thr in enumerate(MAP_50_95_THRESHOLDS):
            ap, no_truth = average_precision(
                dets_per_image, truths_per_image, class_id, thr
            )
            ap_sum[k] += ap
            if no_truth and k == 0:
                flagged.append(class_id)
    map50 = float(ap_sum[0] / num_classes)
    map50_95 = float(ap_sum.mean() / num_classes)

    tp = fp = fn = 0
    for dets, truths in zip(dets_per_image, truths_per_image):
        confident = [d for d in dets if d.score >= pr_score_threshold]
        matched = match_detections(confident, truths, iou_threshold=0.5)
        tp += matched.tp
        fp += matched.fp
        fn += matched.fn
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
    return EvalResult(
        map50=map50,
        map50_95=map50_95,
        recall=recall,
        precision=precision,
        mean_loss=mean_loss,
        zero_truth_classes=tuple(flagged),
    )


def evaluate(
    params: detector.ParamVector,
    test_set: Sequence[Sample],
    config: detector.ModelConfig,
    score_threshold: float = PR_SCORE_THRESHOLD,
    nms_iou: float = 0.5,
    loss_chunk: int = 256,
) -> EvalResult:
    """Full model evaluation on a test set.

    AP sees every detection above a small floor; the reported precision and
    recall use `score_threshold` at IoU 0.50. mean_loss is the mean training
    loss over the set.
    """
    if len(test_set) == 0:
        raise ValueError("test_set must be nonempty")
    check_threshold(score_threshold, "score_threshold")
    dets_per_image: list[list[Detection]] = []
    for start in range(0, len(test_set), loss_chunk):
        chunk = test_set[start : start + loss_chunk]
        dets_per_image.extend(
            detector.predict_batch(
                params, [s.image for s in chunk], config, AP_SCORE_FLOOR, nms_iou
            )
        )
    truths_per_image = [s.annotations for s in test_set]

    total = 0.0
    for start in range(0, len(test_set), loss_chunk):
        chunk = test_set[start : start + loss_chunk]
        value, _ = detector.loss(params, chunk, config)
        total += value * len(chunk)
    mean_loss = total / len(test_set)

    return evaluate_detections(
        dets_per_image,
        truths_per_image,
        num_classes=config.num_classes,
        mean_loss=mean_loss,
        pr_score_threshold=score_threshold,
    )
