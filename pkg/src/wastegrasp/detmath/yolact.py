"""Yolact mask assembly and training loss, with analytic gradients.

Class index 0 is background; object classes are 1..C.  Box regressions
live in the anchor-relative encoding (center offsets over anchor size, log
size ratios).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, InvalidBoxError, UndefinedLossError

BCE_EPS = 1e-7


@dataclass(frozen=True)
class YolactWeights:
    cls: float = 1.0
    box: float = 1.5
    mask: float = 6.125


@dataclass(frozen=True)
class YolactLossTerms:
    cls: float
    box: float
    mask: float
    total: float


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def assemble_masks(prototypes, coeffs) -> np.ndarray:
    """Instance masks ``sigmoid(P C^T)``.

    ``prototypes`` is (h, w, k), ``coeffs`` is (n, k) or (k,).  Returns
    (n, h, w) with values in (0, 1).
    """
    p = np.asarray(prototypes, dtype=float)
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if p.ndim != 3 or c.shape[1] != p.shape[2]:
        raise DimensionError(f"prototypes {p.shape} and coefficients {c.shape} disagree on k")
    lin = np.einsum("hwk,nk->nhw", p, c)
    return sigmoid(lin)


def log_softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True, eq=False)
class MatchMatrix:
    """Detection/ground-truth assignment ``x[i, j]``; the class of a match is
    the ground truth's label."""

    x: np.ndarray  # (n_det, n_gt) 0/1

    def __post_init__(self):
        x = np.asarray(self.x)
        if x.ndim != 2:
            raise DimensionError("match matrix must be 2-D")
        if not np.all((x == 0) | (x == 1)):
            raise ValueError("match entries must be 0 or 1")
        if np.any(x.sum(axis=1) > 1):
            raise ValueError("a detection may match at most one ground truth")
        object.__setattr__(self, "x", x.astype(np.int8))

    @classmethod
    def from_pairs(cls, n_det: int, n_gt: int, pairs) -> "MatchMatrix":
        x = np.zeros((n_det, n_gt), dtype=np.int8)
        for i, j in pairs:
            x[i, j] = 1
        return cls(x)

    @property
    def positives(self) -> tuple[np.ndarray, np.ndarray]:
        return np.nonzero(self.x)

    @property
    def n(self) -> int:
        return int(self.x.sum())


def _labels_for(match: MatchMatrix, gt_labels, n_classes: int):
    det, gt = match.positives
    labels = np.asarray(gt_labels, dtype=int)
    if labels.shape[0] != match.x.shape[1]:
        raise DimensionError("gt_labels length must equal the match matrix's gt count")
    if np.any(labels < 1) or np.any(labels >= n_classes):
        raise ValueError("ground-truth labels must lie in 1..C")
    return det, labels[gt]


def yolact_cls_loss(class_logits, gt_labels, match: MatchMatrix, negatives=()) -> float:
    """Softmax confidence loss over positives and the given negatives.

    ``-(1/N) [sum_pos log softmax_i[label] + sum_neg log softmax_i[0]]``
    with N the number of positive matches.
    """
    logits = np.asarray(class_logits, dtype=float)
    if match.n == 0:
        raise UndefinedLossError("no positive matches (N = 0)")
    det, lab = _labels_for(match, gt_labels, logits.shape[1])
    neg = np.asarray(negatives, dtype=int)
    ls = log_softmax(logits)
    return -(ls[det, lab].sum() + ls[neg, 0].sum()) / match.n


def yolact_cls_loss_grad(class_logits, gt_labels, match: MatchMatrix, negatives=()) -> np.ndarray:
    logits = np.asarray(class_logits, dtype=float)
    if match.n == 0:
        raise UndefinedLossError("no positive matches (N = 0)")
    det, lab = _labels_for(match, gt_labels, logits.shape[1])
    neg = np.asarray(negatives, dtype=int)
    prob = np.exp(log_softmax(logits))
    g = np.zeros_like(logits)
    for rows, cols in ((det, lab), (neg, np.zeros_like(neg))):
        for i, c in zip(rows, cols):
            onehot = np.zeros(logits.shape[1])
            onehot[c] = 1.0
            g[i] += prob[i] - onehot
    return g / match.n


def encode_boxes(gt_boxes, anchors) -> np.ndarray:
    """Regression targets of ``gt_boxes`` relative to ``anchors`` (both cx, cy, w, h)."""
    g = np.atleast_2d(np.asarray(gt_boxes, dtype=float))
    d = np.atleast_2d(np.asarray(anchors, dtype=float))
    if np.any(g[:, 2:] <= 0) or np.any(d[:, 2:] <= 0):
        raise InvalidBoxError("box and anchor sizes must be positive")
    return np.stack([
        (g[:, 0] - d[:, 0]) / d[:, 2],
        (g[:, 1] - d[:, 1]) / d[:, 3],
        np.log(g[:, 2] / d[:, 2]),
        np.log(g[:, 3] / d[:, 3]),
    ], axis=1)


def decode_boxes(deltas, anchors) -> np.ndarray:
    l = np.atleast_2d(np.asarray(deltas, dtype=float))
    d = np.atleast_2d(np.asarray(anchors, dtype=float))
    return np.stack([
        d[:, 0] + l[:, 0] * d[:, 2],
        d[:, 1] + l[:, 1] * d[:, 3],
        d[:, 2] * np.exp(l[:, 2]),
        d[:, 3] * np.exp(l[:, 3]),
    ], axis=1)


def smooth_l1(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, x, np.sign(x))


def _box_residuals(box_deltas, gt_boxes, anchors, match: MatchMatrix):
    l = np.asarray(box_deltas, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    if match.n == 0:
        raise UndefinedLossError("no positive matches (N = 0)")
    if l.shape != anchors.shape or l.shape[1:] != (4,):
        raise DimensionError("box_deltas and anchors must both be (n_det, 4)")
    det, gt = match.positives
    target = encode_boxes(np.asarray(gt_boxes, dtype=float)[gt], anchors[det])
    return det, l[det] - target


def yolact_box_loss(box_deltas, gt_boxes, anchors, match: MatchMatrix) -> float:
    """``(1/N) sum_pos sum_m smoothL1(l_i^m - g_hat_j^m)``."""
    _, r = _box_residuals(box_deltas, gt_boxes, anchors, match)
    return float(smooth_l1(r).sum() / match.n)


def yolact_box_loss_grad(box_deltas, gt_boxes, anchors, match: MatchMatrix) -> np.ndarray:
    det, r = _box_residuals(box_deltas, gt_boxes, anchors, match)
    g = np.zeros(np.shape(box_deltas))
    np.add.at(g, det, smooth_l1_grad(r) / match.n)
    return g


def box_residuals_near_kink(box_deltas, gt_boxes, anchors, match: MatchMatrix, margin: float) -> bool:
    """True when some residual sits within ``margin`` of the |x| = 1 kink."""
    _, r = _box_residuals(box_deltas, gt_boxes, anchors, match)
    return bool(np.any(np.abs(np.abs(r) - 1.0) < margin))


def mask_bce_loss(pred, target, eps: float = BCE_EPS) -> float:
    """Mean per-pixel binary cross-entropy; predictions clamped to [eps, 1-eps]."""
    p = np.asarray(pred, dtype=float)
    y = np.asarray(target, dtype=float)
    if p.shape != y.shape:
        raise DimensionError(f"mask shapes differ: {p.shape} vs {y.shape}")
    p = np.clip(p, eps, 1.0 - eps)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def mask_bce_loss_grad(pred, target, eps: float = BCE_EPS) -> np.ndarray:
    p = np.asarray(pred, dtype=float)
    y = np.asarray(target, dtype=float)
    if p.shape != y.shape:
        raise DimensionError(f"mask shapes differ: {p.shape} vs {y.shape}")
    inside = (p > eps) & (p < 1.0 - eps)
    pc = np.clip(p, eps, 1.0 - eps)
    g = -(y / pc - (1.0 - y) / (1.0 - pc)) / p.size
    return np.where(inside, g, 0.0)


def combine_yolact_loss(l_cls: float, l_box: float, l_mask: float,
                        w: YolactWeights = YolactWeights()) -> float:
    return w.cls * l_cls + w.box * l_box + w.mask * l_mask


@dataclass(frozen=True, eq=False)
class YolactOutput:
    """Raw head outputs for one image: n detections, C+1 classes, k prototypes."""

    class_logits: np.ndarray    # (n, C+1)
    box_deltas: np.ndarray      # (n, 4)
    mask_coeffs: np.ndarray     # (n, k)
    prototypes: np.ndarray      # (h, w, k)


@dataclass(frozen=True, eq=False)
class YolactTargets:
    boxes: np.ndarray           # (m, 4) cx, cy, w, h in pixels
    labels: np.ndarray          # (m,) in 1..C
    masks: np.ndarray           # (m, h, w) binary


def yolact_loss(out: YolactOutput, gts: YolactTargets, anchors, match: MatchMatrix,
                negatives=(), w: YolactWeights = YolactWeights()) -> YolactLossTerms:
    """All three loss terms and their weighted total.

    The mask term averages :func:`mask_bce_loss` over positive matches,
    comparing each assembled instance mask with its ground-truth mask.
    """
    l_cls = yolact_cls_loss(out.class_logits, gts.labels, match, negatives)
    l_box = yolact_box_loss(out.box_deltas, gts.boxes, anchors, match)
    det, gt = match.positives
    masks = assemble_masks(out.prototypes, np.asarray(out.mask_coeffs)[det])
    gt_masks = np.asarray(gts.masks)[gt]
    l_mask = float(np.mean([mask_bce_loss(m, y) for m, y in zip(masks, gt_masks)]))
    return YolactLossTerms(l_cls, l_box, l_mask, combine_yolact_loss(l_cls, l_box, l_mask, w))
