"""Optical tactile processing: slip from frame differencing, contact from a
baseline comparison, and a synthetic gel-image renderer for closed-loop runs.

Frames are numpy arrays, ``(H, W)`` uint8 grayscale or ``(H, W, 3)`` uint8
RGB.  The sensor default is 240 px wide by 320 px tall.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from .errors import DimensionError

FRAME_WIDTH = 240
FRAME_HEIGHT = 320
SEQUENCE_LENGTH = 4


def cross_element(size: int = 7) -> np.ndarray:
    """Cross-shaped structuring element: center row and column set."""
    if size < 1 or size % 2 == 0:
        raise ValueError("structuring element size must be odd and positive")
    k = np.zeros((size, size), dtype=bool)
    k[size // 2, :] = True
    k[:, size // 2] = True
    return k


SLIP_ELEMENT = cross_element(7)
SLIP_ELEMENT.setflags(write=False)


@dataclass(frozen=True)
class TactileConfig:
    subtract_threshold: int = 25          # gray levels
    slip_brightness_threshold: float = 0.01
    contact_energy_threshold: float = 0.01

    def __post_init__(self):
        if not 0 <= self.subtract_threshold <= 255:
            raise ValueError("subtract_threshold must lie in [0, 255]")
        for name in ("slip_brightness_threshold", "contact_energy_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_json(cls, obj: dict) -> "TactileConfig":
        return cls(**obj)


def to_gray(frame) -> np.ndarray:
    """BT.601 luma, rounded half up. Grayscale input passes through."""
    frame = np.asarray(frame)
    if frame.ndim == 2:
        return frame.astype(np.uint8, copy=False)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DimensionError(f"expected (H, W) or (H, W, 3) frame, got {frame.shape}")
    f = frame.astype(np.float64)
    y = 0.299 * f[..., 0] + 0.587 * f[..., 1] + 0.114 * f[..., 2]
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def _offsets(element: np.ndarray):
    r, c = element.shape
    ys, xs = np.nonzero(element)
    return [(int(y) - r // 2, int(x) - c // 2) for y, x in zip(ys, xs)], (r // 2, c // 2)


def erode(img, element: np.ndarray = SLIP_ELEMENT) -> np.ndarray:
    """Binary erosion; anything outside the image counts as 0."""
    img = np.asarray(img, dtype=bool)
    offs, (pr, pc) = _offsets(element)
    h, w = img.shape
    padded = np.zeros((h + 2 * pr, w + 2 * pc), dtype=bool)
    padded[pr:pr + h, pc:pc + w] = img
    out = np.ones_like(img)
    for dy, dx in offs:
        out &= padded[pr + dy:pr + dy + h, pc + dx:pc + dx + w]
    return out


def dilate(img, element: np.ndarray = SLIP_ELEMENT) -> np.ndarray:
    """Binary dilation with the reflected element, clipped to the image."""
    img = np.asarray(img, dtype=bool)
    offs, (pr, pc) = _offsets(element)
    h, w = img.shape
    padded = np.zeros((h + 2 * pr, w + 2 * pc), dtype=bool)
    padded[pr:pr + h, pc:pc + w] = img
    out = np.zeros_like(img)
    for dy, dx in offs:
        out |= padded[pr - dy:pr - dy + h, pc - dx:pc - dx + w]
    return out


def opening(img, element: np.ndarray = SLIP_ELEMENT) -> np.ndarray:
    return dilate(erode(img, element), element)


def _check_sequence(frames: Sequence) -> list[np.ndarray]:
    if len(frames) != SEQUENCE_LENGTH:
        raise DimensionError(f"a slip sequence holds exactly {SEQUENCE_LENGTH} frames, got {len(frames)}")
    gray = [to_gray(f) for f in frames]
    if any(g.shape != gray[0].shape for g in gray):
        raise DimensionError("frames in a sequence must share dimensions")
    return gray


def slip_preprocess(frames: Sequence, cfg: TactileConfig = TactileConfig(),
                    element: np.ndarray = SLIP_ELEMENT) -> np.ndarray:
    """Binary deformation map between the first and last frame.

    ``|last - first| > subtract_threshold`` followed by a morphological
    opening with ``element``.  Returns a uint8 image of 0/1.
    """
    gray = _check_sequence(frames)
    diff = np.abs(gray[3].astype(np.int16) - gray[0].astype(np.int16))
    return opening(diff > cfg.subtract_threshold, element).astype(np.uint8)


def brightness(img) -> float:
    """Fraction of set pixels."""
    img = np.asarray(img)
    return float(np.count_nonzero(img)) / img.size


def detect_slip(frames: Sequence, cfg: TactileConfig = TactileConfig()) -> int:
    return int(brightness(slip_preprocess(frames, cfg)) > cfg.slip_brightness_threshold)


class ContactDetector(Protocol):
    """Anything that labels a tactile frame as touching (1) or not (0)."""

    def __call__(self, frame: np.ndarray, baseline: np.ndarray) -> int: ...


@dataclass(frozen=True)
class BaselineDifferenceDetector:
    """Reference contact detector.

    Reports contact when the share of pixels that moved by more than
    ``subtract_threshold`` gray levels from the no-contact baseline exceeds
    ``contact_energy_threshold``.
    """

    cfg: TactileConfig = TactileConfig()

    def __call__(self, frame, baseline) -> int:
        g, b = to_gray(frame), to_gray(baseline)
        if g.shape != b.shape:
            raise DimensionError(f"frame {g.shape} and baseline {b.shape} differ")
        moved = np.abs(g.astype(np.int16) - b.astype(np.int16)) > self.cfg.subtract_threshold
        return int(np.count_nonzero(moved) / moved.size > self.cfg.contact_energy_threshold)


def detect_contact(frame, baseline, cfg: TactileConfig = TactileConfig()) -> int:
    return BaselineDifferenceDetector(cfg)(frame, baseline)


@dataclass(frozen=True)
class TactileSimParams:
    """Knobs of the synthetic gel renderer."""

    width: int = FRAME_WIDTH
    height: int = FRAME_HEIGHT
    noise_amplitude: int = 2          # uniform per-pixel noise, gray levels
    contact_base: float = 40.0        # imprint intensity when the finger just touches
    gain_per_mm: float = 10.0         # extra intensity per mm of squeeze
    max_intensity: float = 120.0
    blob_semi_axes: tuple[float, float] = (0.19, 0.17)  # fraction of (height, width)


@lru_cache(maxsize=8)
def _background(width: int, height: int) -> np.ndarray:
    # Smooth illumination gradient, like the LED falloff in a gel sensor.
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    r = 90 + 50 * xx / max(width - 1, 1)
    g = 110 + 30 * np.cos(np.pi * yy / max(height - 1, 1))
    b = 140 - 40 * yy / max(height - 1, 1)
    bg = np.stack([r, g, b], axis=-1)
    bg.setflags(write=False)
    return bg


def background_frame(params: TactileSimParams = TactileSimParams()) -> np.ndarray:
    """Noise-free no-contact frame; the natural contact baseline."""
    return np.rint(_background(params.width, params.height)).astype(np.uint8)


def simulate_tactile_frame(opening: float, object_width: float, slip_offset: float = 0.0,
                           noise_seed=0, params: TactileSimParams = TactileSimParams()) -> np.ndarray:
    """Render one RGB gel image for a finger squeezing an object.

    Contact happens when ``0 < object_width`` and ``opening <= object_width``
    (both in mm).  The imprint is a uniform ellipse whose intensity is
    ``contact_base + gain_per_mm * (object_width - opening)``, shifted down
    the sensor by ``slip_offset`` pixels.  ``noise_seed`` may be anything
    :func:`numpy.random.default_rng` accepts.
    """
    if opening < 0:
        raise ValueError("opening must be >= 0")
    img = np.array(_background(params.width, params.height))
    if object_width > 0 and opening <= object_width:
        squeeze = object_width - opening
        level = min(params.contact_base + params.gain_per_mm * squeeze, params.max_intensity)
        ay = params.blob_semi_axes[0] * params.height
        ax = params.blob_semi_axes[1] * params.width
        cy = params.height / 2.0 + slip_offset
        cx = params.width / 2.0
        yy, xx = np.ogrid[0:params.height, 0:params.width]
        inside = ((yy + 0.5 - cy) / ay) ** 2 + ((xx + 0.5 - cx) / ax) ** 2 <= 1.0
        img[inside] += level
    if params.noise_amplitude > 0:
        rng = np.random.default_rng(noise_seed)
        img += rng.integers(-params.noise_amplitude, params.noise_amplitude + 1, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
