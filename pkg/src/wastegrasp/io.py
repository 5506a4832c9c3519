"""File formats: ASCII PLY clouds, binary PGM/PPM frames, JSON-lines detection sets."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image
from plyfile import PlyData, PlyElement

from .detmath.metrics import ImageDetections, ImageGroundTruth
from .graspplan import PointCloud


def write_ply(path, cloud: PointCloud):
    """ASCII PLY, ``x y z`` plus ``red green blue`` when colors are present."""
    fields = [("x", "f8"), ("y", "f8"), ("z", "f8")]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    data = np.empty(len(cloud), dtype=fields)
    data["x"], data["y"], data["z"] = cloud.points.T
    if cloud.colors is not None:
        rgb = np.asarray(cloud.colors, dtype=np.uint8)
        data["red"], data["green"], data["blue"] = rgb.T
    PlyData([PlyElement.describe(data, "vertex")], text=True).write(str(path))


def read_ply(path) -> PointCloud:
    vertex = PlyData.read(str(path))["vertex"]
    pts = np.stack([np.asarray(vertex[c], dtype=float) for c in ("x", "y", "z")], axis=1)
    names = {p.name for p in vertex.properties}
    colors = None
    if {"red", "green", "blue"} <= names:
        colors = np.stack([np.asarray(vertex[c], dtype=np.uint8) for c in ("red", "green", "blue")], axis=1)
    return PointCloud(pts, colors)


def write_frame(path, frame: np.ndarray):
    """Binary PGM (P5) for 2-D frames, PPM (P6) for RGB."""
    frame = np.asarray(frame)
    if frame.dtype != np.uint8:
        raise ValueError("frames must be uint8")
    mode = "L" if frame.ndim == 2 else "RGB"
    Image.fromarray(frame, mode).save(str(path), format="PPM")


def read_frame(path) -> np.ndarray:
    with Image.open(str(path)) as img:
        if img.mode not in ("L", "RGB"):
            raise ValueError(f"{path}: expected an 8-bit PGM or PPM, got mode {img.mode}")
        return np.array(img)


def read_jsonl(path) -> list[dict]:
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: {exc.msg}") from None
    return rows


def load_detections(path) -> list[ImageDetections]:
    return [ImageDetections.from_json(r) for r in read_jsonl(path)]


def load_ground_truth(path) -> list[ImageGroundTruth]:
    return [ImageGroundTruth.from_json(r) for r in read_jsonl(path)]
