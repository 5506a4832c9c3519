"""Oracle detector: ground-truth boxes and masks from the renderer, optionally perturbed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tactile import erode
from .scene import DetectorNoise, RenderedScene, SceneConfig

_CROSS3 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True, eq=False)
class OracleDetection:
    object_index: int
    box: tuple[float, float, float, float]   # cx, cy, w, h in pixels
    mask: np.ndarray                          # (H, W) bool
    label: int
    confidence: float = 1.0

    def to_json(self) -> dict:
        return {"object_index": self.object_index, "box": [float(b) for b in self.box],
                "label": self.label, "confidence": self.confidence,
                "mask_pixels": int(self.mask.sum())}


def mask_box(mask: np.ndarray) -> tuple[float, float, float, float]:
    """Tight (cx, cy, w, h) box around a mask, pixel edges included."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    x0, x1, y0, y1 = cols[0], cols[-1], rows[0], rows[-1]
    return ((x0 + x1) / 2.0, (y0 + y1) / 2.0, float(x1 - x0 + 1), float(y1 - y0 + 1))


def _flip(label: int, n_classes: int, rng: np.random.Generator) -> int:
    others = [c for c in range(1, n_classes + 1) if c != label]
    return int(others[rng.integers(len(others))]) if others else label


def oracle_detect(cfg: SceneConfig, rendered: RenderedScene,
                  noise: DetectorNoise | None = None) -> list[OracleDetection]:
    """One detection per visible object, in object order."""
    noise = cfg.detector if noise is None else noise
    rng = np.random.default_rng([cfg.seed, 2])
    out = []
    for idx in sorted(rendered.masks):
        mask = rendered.masks[idx]
        for _ in range(noise.mask_erosion_steps):
            mask = erode(mask, _CROSS3).astype(bool)
        if not mask.any():
            continue
        cx, cy, w, h = mask_box(mask)
        if noise.box_jitter_px > 0:
            jx, jy, jw, jh = rng.normal(0.0, noise.box_jitter_px, size=4)
            cx, cy = cx + jx, cy + jy
            w, h = max(1.0, w + jw), max(1.0, h + jh)
        label = cfg.objects[idx].label
        if noise.label_flip_prob > 0 and rng.random() < noise.label_flip_prob:
            label = _flip(label, noise.n_classes, rng)
        out.append(OracleDetection(idx, (float(cx), float(cy), float(w), float(h)), mask, label))
    return out
