"""Antipodal grasp-point selection on a segmented single-view point cloud.

Pipeline: masked depth pixels -> camera-frame cloud -> per-point surface
variation and normals from k-NN PCA -> cutting plane through the centroid,
perpendicular to the object's main axis -> best pair of contacts near that
plane with opposed normals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (DegenerateGeometryError, DimensionError, EmptyCloudError,
                     NoGraspFoundError)
from .geometry import Intrinsics, RigidTransform, apply, backproject_many


@dataclass(frozen=True)
class GraspPlanConfig:
    k_neighbors: int = 30
    plane_band: float = 0.01              # m
    opposition_min_angle: float = 150.0   # deg, between outward normals
    plane_parallel_max_angle: float = 30.0  # deg, min angle between segment and plane normal
    max_width: float = 0.14               # m, ROBOTIQ 2F-140 stroke

    def __post_init__(self):
        if self.k_neighbors < 4:
            raise ValueError("k_neighbors must be >= 4")
        if not self.plane_band > 0:
            raise ValueError("plane_band must be positive")
        for name in ("opposition_min_angle", "plane_parallel_max_angle"):
            if not 0.0 < getattr(self, name) < 180.0:
                raise ValueError(f"{name} must lie in (0, 180) degrees")
        if not self.max_width > 0:
            raise ValueError("max_width must be positive")

    @classmethod
    def from_json(cls, obj: dict) -> "GraspPlanConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown grasp config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray                      # (n, 3) meters
    colors: np.ndarray | None = field(default=None)  # (n, 3) uint8

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            cols = np.array(self.colors).reshape(-1, 3)
            if cols.shape[0] != pts.shape[0]:
                raise DimensionError("colors and points differ in length")
            if np.any(cols < 0) or np.any(cols > 255):
                raise ValueError("colors must lie in [0, 255]")
            object.__setattr__(self, "colors", cols.astype(np.uint8))

    def __len__(self):
        return self.points.shape[0]

    def transformed(self, t: RigidTransform) -> "PointCloud":
        return PointCloud(apply(t, self.points), self.colors)


@dataclass(frozen=True)
class GraspPlane:
    point: np.ndarray
    normal: np.ndarray

    def distance(self, pts) -> np.ndarray:
        return np.abs((np.asarray(pts, dtype=float) - self.point) @ self.normal)


@dataclass(frozen=True)
class GraspPair:
    """Two contact points picked from the cloud.

    ``score`` is the minimized cost (lower is better); ``quality`` maps it to
    ``1 / (1 + score)`` so that larger means better.
    """

    p_a: np.ndarray
    p_b: np.ndarray
    index_a: int
    index_b: int
    score: float

    @property
    def quality(self) -> float:
        return 1.0 / (1.0 + self.score)

    @property
    def width(self) -> float:
        return float(np.linalg.norm(self.p_a - self.p_b))

    def to_json(self) -> dict:
        return {"pa": self.p_a.tolist(), "pb": self.p_b.tolist(), "quality": self.quality}


def extract_object_cloud(depth, mask, k: Intrinsics, rgb=None) -> PointCloud:
    """One camera-frame point per masked pixel that has a valid depth."""
    depth = np.asarray(depth, dtype=float)
    mask = np.asarray(mask)
    if depth.ndim != 2 or depth.shape != mask.shape:
        raise DimensionError(f"depth {depth.shape} and mask {mask.shape} must be equal 2-D shapes")
    if np.any(depth < 0):
        raise ValueError("depth values must be >= 0")
    rows, cols = np.nonzero(mask.astype(bool) & (depth > 0))
    if rows.size == 0:
        raise EmptyCloudError("no masked pixel carries a valid depth")
    pts = backproject_many(cols, rows, depth[rows, cols], k)
    colors = None
    if rgb is not None:
        colors = np.asarray(rgb)[rows, cols]
    return PointCloud(pts, colors)


def _neighborhood_pca(points: np.ndarray, k: int):
    _, idx = cKDTree(points).query(points, k=k)
    nb = points[idx]
    c = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", c, c) / k
    evals, evecs = np.linalg.eigh(cov)
    return np.clip(evals, 0.0, None), evecs


def estimate_normals_and_curvature(cloud: PointCloud, cfg: GraspPlanConfig):
    """Per-point surface variation and outward unit normals.

    Surface variation is ``l0 / (l0 + l1 + l2)`` for the ascending
    eigenvalues of the k-NN covariance (the query point counts as one of the
    k); a fully coincident neighborhood gets 0.  Normals are the
    smallest-eigenvalue eigenvectors flipped to point away from the cloud
    centroid.
    """
    pts = cloud.points
    if len(pts) <= cfg.k_neighbors:
        raise DimensionError(f"cloud has {len(pts)} points, need more than k_neighbors={cfg.k_neighbors}")
    evals, evecs = _neighborhood_pca(pts, cfg.k_neighbors)
    total = evals.sum(axis=1)
    curvature = np.divide(evals[:, 0], total, out=np.zeros_like(total), where=total > 0)
    normals = evecs[:, :, 0].copy()
    outward = pts - pts.mean(axis=0)
    flip = np.einsum("ij,ij->i", normals, outward) < 0
    normals[flip] *= -1.0
    return curvature, normals


def estimate_curvature(cloud: PointCloud, cfg: GraspPlanConfig) -> np.ndarray:
    return estimate_normals_and_curvature(cloud, cfg)[0]


def grasp_plane(cloud: PointCloud) -> GraspPlane:
    """Plane through the centroid whose normal is the cloud's principal axis."""
    pts = cloud.points
    if len(pts) < 3:
        raise DegenerateGeometryError("a grasp plane needs at least 3 points")
    centroid = pts.mean(axis=0)
    c = pts - centroid
    evals, evecs = np.linalg.eigh(c.T @ c / len(pts))
    if evals[2] <= 0 or evals[1] <= 1e-12 * evals[2]:
        raise DegenerateGeometryError("cloud is collinear or coincident")
    normal = evecs[:, 2]
    # Eigenvector sign is arbitrary; pin it so results are reproducible.
    if normal[np.argmax(np.abs(normal))] < 0:
        normal = -normal
    return GraspPlane(centroid, normal)


def _pair_candidates(pts, curvature, normals, plane: GraspPlane, cfg: GraspPlanConfig):
    """Score every admissible (i < j) pair among points inside the band.

    Returns arrays (i, j, score, width) restricted to pairs that satisfy all
    constraints.
    """
    dist = plane.distance(pts)
    band = np.flatnonzero(dist <= cfg.plane_band)
    if band.size < 2:
        return (np.empty(0, int),) * 2 + (np.empty(0),) * 2
    cos_opp = math.cos(math.radians(cfg.opposition_min_angle))
    cos_par = math.cos(math.radians(cfg.plane_parallel_max_angle))
    unit_cost = curvature[band] + dist[band] / cfg.plane_band
    ii, jj = np.triu_indices(band.size, k=1)
    out_i, out_j, out_s, out_w = [], [], [], []
    chunk = 1 << 20
    for lo in range(0, ii.size, chunk):
        a = ii[lo:lo + chunk]
        b = jj[lo:lo + chunk]
        ga, gb = band[a], band[b]
        seg = pts[gb] - pts[ga]
        width = np.linalg.norm(seg, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos_seg = np.abs(seg @ plane.normal) / width
        ok = (width > 0) & (width <= cfg.max_width)
        ok &= np.einsum("ij,ij->i", normals[ga], normals[gb]) <= cos_opp
        ok &= cos_seg <= cos_par
        out_i.append(ga[ok])
        out_j.append(gb[ok])
        out_s.append(unit_cost[a[ok]] + unit_cost[b[ok]])
        out_w.append(width[ok])
    return (np.concatenate(out_i), np.concatenate(out_j),
            np.concatenate(out_s), np.concatenate(out_w))


def select_grasp_pair(cloud: PointCloud, cfg: GraspPlanConfig = GraspPlanConfig()) -> GraspPair:
    """Pick the contact pair with the lowest cost.

    cost = curv(a) + curv(b) + (dist(a) + dist(b)) / plane_band

    A pair is admissible when both points lie within ``plane_band`` of the
    cutting plane, their outward normals are at least
    ``opposition_min_angle`` apart, the segment between them makes at least
    ``plane_parallel_max_angle`` with the plane normal, and the gripper can
    span it (``max_width``).  Ties go to the wider pair, then to the
    lexicographically smaller (index_a, index_b) with index_a < index_b.
    """
    curvature, normals = estimate_normals_and_curvature(cloud, cfg)
    plane = grasp_plane(cloud)
    i, j, score, width = _pair_candidates(cloud.points, curvature, normals, plane, cfg)
    if score.size == 0:
        raise NoGraspFoundError("no point pair satisfies the grasp constraints")
    best = np.lexsort((j, i, -width, score))[0]
    a, b = int(i[best]), int(j[best])
    return GraspPair(cloud.points[a].copy(), cloud.points[b].copy(), a, b, float(score[best]))
