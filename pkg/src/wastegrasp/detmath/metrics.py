"""Detection evaluation: IoU, all-point interpolated AP, accuracy.

Precision is TP / (TP + FP) and recall is TP / (TP + FN).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import InvalidBoxError, UndefinedMetricError

AP_THRESHOLDS = (0.5, 0.75, 0.9)


@dataclass(frozen=True)
class BoundingBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InvalidBoxError(f"box size must be positive, got w={self.w}, h={self.h}")

    def corners(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)


def _as_box(b) -> BoundingBox:
    return b if isinstance(b, BoundingBox) else BoundingBox(*map(float, b))


def iou(a, b) -> float:
    """Intersection over union of two (cx, cy, w, h) boxes."""
    ax0, ay0, ax1, ay1 = _as_box(a).corners()
    bx0, by0, bx1, by1 = _as_box(b).corners()
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def iou_matrix(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    a0, a1 = a[:, None, :2] - a[:, None, 2:] / 2, a[:, None, :2] + a[:, None, 2:] / 2
    b0, b1 = b[None, :, :2] - b[None, :, 2:] / 2, b[None, :, :2] + b[None, :, 2:] / 2
    wh = np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = (a[:, None, 2] * a[:, None, 3]) + (b[None, :, 2] * b[None, :, 3]) - inter
    return inter / union


@dataclass(frozen=True, eq=False)
class ImageDetections:
    image_id: str
    boxes: np.ndarray                       # (n, 4) cx, cy, w, h
    scores: np.ndarray                      # (n,)
    labels: np.ndarray                      # (n,)

    def __post_init__(self):
        object.__setattr__(self, "boxes", np.asarray(self.boxes, dtype=float).reshape(-1, 4))
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float).reshape(-1))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int).reshape(-1))
        if not len(self.boxes) == len(self.scores) == len(self.labels):
            raise ValueError("boxes, scores and labels differ in length")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    @classmethod
    def from_json(cls, obj: dict) -> "ImageDetections":
        return cls(str(obj["image_id"]), obj.get("boxes", []), obj.get("scores", []), obj.get("labels", []))


@dataclass(frozen=True, eq=False)
class ImageGroundTruth:
    image_id: str
    boxes: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "boxes", np.asarray(self.boxes, dtype=float).reshape(-1, 4))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int).reshape(-1))
        if len(self.boxes) != len(self.labels):
            raise ValueError("boxes and labels differ in length")

    @classmethod
    def from_json(cls, obj: dict) -> "ImageGroundTruth":
        return cls(str(obj["image_id"]), obj.get("boxes", []), obj.get("labels", []))


def _listify(x):
    return [x] if isinstance(x, (ImageDetections, ImageGroundTruth)) else list(x)


def match_detections(dets, gts, iou_threshold: float, label: int | None = None):
    """Greedy matching in descending score order.

    Each detection takes the unmatched ground truth (same image, same class)
    with the highest IoU, provided that IoU reaches ``iou_threshold``.
    Returns (scores sorted descending, TP flags, number of ground truths).
    """
    dets, gts = _listify(dets), _listify(gts)
    gt_by_image = {}
    n_gt = 0
    for g in gts:
        keep = slice(None) if label is None else g.labels == label
        boxes = g.boxes[keep]
        gt_by_image.setdefault(g.image_id, []).append(boxes)
        n_gt += len(boxes)
    gt_boxes = {k: np.concatenate(v) for k, v in gt_by_image.items()}

    entries = []
    for d in dets:
        keep = np.ones(len(d.scores), bool) if label is None else d.labels == label
        for box, score in zip(d.boxes[keep], d.scores[keep]):
            entries.append((score, d.image_id, box))
    # Stable sort: equal scores keep input order.
    order = sorted(range(len(entries)), key=lambda k: -entries[k][0])
    used = {k: np.zeros(len(v), bool) for k, v in gt_boxes.items()}
    scores = np.empty(len(order))
    tp = np.zeros(len(order), bool)
    for rank, k in enumerate(order):
        score, image_id, box = entries[k]
        scores[rank] = score
        cand = gt_boxes.get(image_id)
        if cand is None or len(cand) == 0:
            continue
        ious = iou_matrix(box, cand)[0]
        ious[used[image_id]] = -1.0
        best = int(np.argmax(ious))
        if ious[best] >= iou_threshold:
            used[image_id][best] = True
            tp[rank] = True
    return scores, tp, n_gt


def precision_recall(tp: np.ndarray, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    ctp = np.cumsum(tp)
    ranks = np.arange(1, len(tp) + 1)
    return ctp / ranks, ctp / n_gt


def average_precision(dets, gts, iou_threshold: float = 0.5, label: int | None = None) -> float:
    """Area under the interpolated precision-recall curve.

    Each recall increment is weighted by the best precision reached at that
    recall or beyond.  ``label=None`` ignores class labels; pass a label to
    score a single class.
    """
    _, tp, n_gt = match_detections(dets, gts, iou_threshold, label)
    if n_gt == 0:
        raise UndefinedMetricError("AP is undefined without ground truths")
    if len(tp) == 0:
        return 0.0
    precision, recall = precision_recall(tp, n_gt)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    step = np.diff(recall, prepend=0.0)
    return float(np.sum(step * envelope))


def mean_average_precision(dets, gts, iou_threshold: float = 0.5) -> tuple[float, dict[int, float]]:
    """Mean of per-class AP over the classes that have ground truths."""
    labels = sorted({int(l) for g in _listify(gts) for l in g.labels})
    if not labels:
        raise UndefinedMetricError("AP is undefined without ground truths")
    per_class = {l: average_precision(dets, gts, iou_threshold, l) for l in labels}
    return float(np.mean(list(per_class.values()))), per_class


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be >= 0")

    @classmethod
    def from_predictions(cls, predicted: Iterable[int], actual: Iterable[int]) -> "ConfusionCounts":
        p = np.asarray(list(predicted), dtype=bool)
        a = np.asarray(list(actual), dtype=bool)
        return cls(int(np.sum(p & a)), int(np.sum(~p & ~a)), int(np.sum(p & ~a)), int(np.sum(~p & a)))


def accuracy(c: ConfusionCounts) -> float:
    total = c.tp + c.tn + c.fp + c.fn
    if total == 0:
        raise UndefinedMetricError("accuracy is undefined for zero samples")
    return (c.tp + c.tn) / total
