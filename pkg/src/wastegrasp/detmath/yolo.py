"""Yolo grid loss: box, class and objectness terms with analytic gradients.

Grids are (S, S, B, ...) arrays: S x S cells, B anchors per cell.  Box
coordinates (x, y, w, h) are normalized to [0, 1] so the small-box factor
``2 - w*h`` stays in [1, 2].  The factor uses the predicted w and h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError

PROB_EPS = 1e-7


@dataclass(frozen=True)
class YoloWeights:
    coord: float = 5.0
    cls: float = 1.0
    obj: float = 1.0
    noobj: float = 0.5
    grid: int = 7        # S
    anchors: int = 3     # B

    def __post_init__(self):
        if min(self.coord, self.cls, self.obj, self.noobj) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.grid < 1 or self.anchors < 1:
            raise ValueError("grid size and anchor count must be >= 1")


@dataclass(frozen=True, eq=False)
class YoloGrid:
    """Predictions, or targets when ``obj`` is given."""

    boxes: np.ndarray        # (S, S, B, 4)
    conf: np.ndarray         # (S, S, B)
    class_probs: np.ndarray  # (S, S, B, C)
    obj: np.ndarray | None = None  # (S, S, B) 0/1, targets only

    def __post_init__(self):
        for name in ("boxes", "conf", "class_probs", "obj"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=float))


def _check(pred: YoloGrid, target: YoloGrid, w: YoloWeights):
    s, b = w.grid, w.anchors
    if target.obj is None:
        raise DimensionError("target grid needs an obj indicator")
    for g in (pred, target):
        if g.boxes.shape != (s, s, b, 4) or g.conf.shape != (s, s, b):
            raise DimensionError(f"grid shapes do not match S={s}, B={b}")
        if g.class_probs.shape[:3] != (s, s, b):
            raise DimensionError("class_probs grid does not match S, B")
    if target.obj.shape != (s, s, b):
        raise DimensionError("obj indicator grid does not match S, B")
    if pred.class_probs.shape != target.class_probs.shape:
        raise DimensionError("predicted and target class vectors differ in length")


def yolo_box_loss(pred: YoloGrid, target: YoloGrid, w: YoloWeights) -> float:
    _check(pred, target, w)
    sq = ((pred.boxes - target.boxes) ** 2).sum(axis=-1)
    scale = 2.0 - pred.boxes[..., 2] * pred.boxes[..., 3]
    return float(w.coord * np.sum(target.obj * scale * sq))


def yolo_box_loss_grad(pred: YoloGrid, target: YoloGrid, w: YoloWeights) -> np.ndarray:
    """Gradient with respect to ``pred.boxes``."""
    _check(pred, target, w)
    diff = pred.boxes - target.boxes
    sq = (diff ** 2).sum(axis=-1)
    pw, ph = pred.boxes[..., 2], pred.boxes[..., 3]
    scale = 2.0 - pw * ph
    g = 2.0 * diff * scale[..., None]
    g[..., 2] -= ph * sq
    g[..., 3] -= pw * sq
    return w.coord * target.obj[..., None] * g


def yolo_cls_loss(pred: YoloGrid, target: YoloGrid, w: YoloWeights) -> float:
    """Cross-entropy between target and predicted class probabilities in object cells."""
    _check(pred, target, w)
    p = np.clip(pred.class_probs, PROB_EPS, 1.0)
    return float(-w.cls * np.sum(target.obj[..., None] * target.class_probs * np.log(p)))


def yolo_cls_loss_grad(pred: YoloGrid, target: YoloGrid, w: YoloWeights) -> np.ndarray:
    """Gradient with respect to ``pred.class_probs``."""
    _check(pred, target, w)
    p = pred.class_probs
    g = -w.cls * target.obj[..., None] * target.class_probs / np.clip(p, PROB_EPS, 1.0)
    return np.where(p > PROB_EPS, g, 0.0)


def yolo_obj_loss(pred: YoloGrid, target: YoloGrid, w: YoloWeights) -> float:
    _check(pred, target, w)
    sq = (pred.conf - target.conf) ** 2
    return float(w.noobj * np.sum((1.0 - target.obj) * sq) + w.obj * np.sum(target.obj * sq))


def yolo_obj_loss_grad(pred: YoloGrid, target: YoloGrid, w: YoloWeights) -> np.ndarray:
    """Gradient with respect to ``pred.conf``."""
    _check(pred, target, w)
    weight = w.noobj * (1.0 - target.obj) + w.obj * target.obj
    return 2.0 * weight * (pred.conf - target.conf)


def yolo_loss(pred: YoloGrid, target: YoloGrid, w: YoloWeights = YoloWeights()) -> dict:
    terms = {
        "box": yolo_box_loss(pred, target, w),
        "cls": yolo_cls_loss(pred, target, w),
        "obj": yolo_obj_loss(pred, target, w),
    }
    terms["total"] = terms["box"] + terms["cls"] + terms["obj"]
    return terms
