"""Pinhole back-projection, rigid transforms and the sensor/arm frame chains.

Frame naming follows the robot layout: camera (c), LiDAR (l), mobile
platform (r for localization), robot base, effector flange (e) and gripper
fingers (p).  A transform ``T_a_b`` maps coordinates expressed in frame b
into frame a, so ``apply(T_a_b, p_b) == p_a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, InvalidDepthError, InvalidTransformError

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, p) -> tuple[float, float]:
        """Camera-frame point -> (u, v) pixel coordinates."""
        x, y, z = np.asarray(p, dtype=float)
        return self.fx * x / z + self.cx, self.fy * y / z + self.cy


def backproject(u: float, v: float, d: float, k: Intrinsics) -> np.ndarray:
    """Pixel (u, v) with z-depth ``d`` in meters -> camera-frame point."""
    if not d > 0:
        raise InvalidDepthError(f"depth must be positive, got {d}")
    return np.array([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, float(d)])


def backproject_many(u, v, d, k: Intrinsics) -> np.ndarray:
    """Vectorized :func:`backproject`; returns an (n, 3) array."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise InvalidDepthError("all depths must be positive")
    return np.stack([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d], axis=-1)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion ``p -> R p + t``.

    Inputs that are not orthonormal (or are reflections) are rejected rather
    than silently re-orthonormalized.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidTransformError("transform entries must be finite")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL:
            raise InvalidTransformError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise InvalidTransformError("rotation determinant is not +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "RigidTransform":
        return cls(np.eye(3), np.array([x, y, z], dtype=float))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise DimensionError(f"expected a 4x4 matrix, got {m.shape}")
        if np.max(np.abs(m[3] - [0, 0, 0, 1])) > ORTHO_TOL:
            raise InvalidTransformError("last row of a homogeneous transform must be [0 0 0 1]")
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, rtol=0.0, atol=atol))

    def to_json(self) -> dict:
        return {"r": self.rotation.reshape(-1).tolist(), "t": self.translation.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "RigidTransform":
        r, t = obj["r"], obj["t"]
        if len(r) != 9 or len(t) != 3:
            raise DimensionError('transform JSON needs "r" with 9 numbers and "t" with 3')
        return cls(np.asarray(r, dtype=float).reshape(3, 3), np.asarray(t, dtype=float))

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_rpy(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis roll/pitch/yaw: ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def apply(t: RigidTransform, p) -> np.ndarray:
    """Map a point, or an (n, 3) array of points, through ``t``."""
    p = np.asarray(p, dtype=float)
    return p @ t.rotation.T + t.translation


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``compose(a, b)`` applies b first, then a."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


OFFSET_CONVENTIONS = ("current_minus_start", "start_minus_current")


def mission_offset(current_position, start_position,
                   convention: str = "current_minus_start") -> np.ndarray:
    """Offset of the platform from where the mission started, in world axes.

    The default makes work-zone coordinates ``world - start``; the reverse
    sign is available for setups whose odometry reports it the other way.
    """
    if convention not in OFFSET_CONVENTIONS:
        raise ValueError(f"unknown offset convention {convention!r}")
    off = np.asarray(current_position, dtype=float) - np.asarray(start_position, dtype=float)
    return off if convention == "current_minus_start" else -off


def lidar_to_world(p_lidar, lidar_to_platform: RigidTransform, off) -> np.ndarray:
    """LiDAR-frame point -> work-zone coordinates: ``lidar_to_platform(p) + offset``.

    ``lidar_to_platform`` must carry the platform's heading (rotation into
    world axes); ``off`` is :func:`mission_offset` of the current platform
    position.
    """
    return apply(lidar_to_platform, p_lidar) + np.asarray(off, dtype=float)


def localize(u: float, v: float, d: float, k: Intrinsics, camera_to_lidar: RigidTransform,
             lidar_to_platform: RigidTransform, off) -> np.ndarray:
    """Pixel + depth through camera -> LiDAR -> work-zone coordinates."""
    p_cam = backproject(u, v, d, k)
    return lidar_to_world(apply(camera_to_lidar, p_cam), lidar_to_platform, off)


@dataclass(frozen=True)
class DhJoint:
    a: float
    alpha: float
    d: float
    theta_offset: float = 0.0


@dataclass(frozen=True)
class DhChain:
    """Standard (distal) Denavit-Hartenberg parameter table."""

    joints: tuple[DhJoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.joints) < 1:
            raise DimensionError("a DH chain needs at least one joint")

    def __len__(self):
        return len(self.joints)

    @classmethod
    def from_json(cls, rows: Iterable[dict]) -> "DhChain":
        return cls(tuple(DhJoint(float(r["a"]), float(r["alpha"]), float(r["d"]),
                                 float(r.get("theta_offset", 0.0))) for r in rows))

    def to_json(self) -> list[dict]:
        return [{"a": j.a, "alpha": j.alpha, "d": j.d, "theta_offset": j.theta_offset} for j in self.joints]


# Universal Robots' published DH table for the UR5e.
UR5E = DhChain((
    DhJoint(0.0, math.pi / 2, 0.1625),
    DhJoint(-0.425, 0.0, 0.0),
    DhJoint(-0.3922, 0.0, 0.0),
    DhJoint(0.0, math.pi / 2, 0.1333),
    DhJoint(0.0, -math.pi / 2, 0.0997),
    DhJoint(0.0, 0.0, 0.0996),
))


def dh_matrix(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    """``Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(alpha)`` as a 4x4 matrix."""
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def dh_forward(chain: DhChain, joints: Sequence[float]) -> RigidTransform:
    """Base -> flange transform for the given joint angles (radians)."""
    q = np.asarray(joints, dtype=float).reshape(-1)
    if q.size != len(chain):
        raise DimensionError(f"chain has {len(chain)} joints, got {q.size} joint values")
    m = np.eye(4)
    for jt, theta in zip(chain.joints, q):
        m = m @ dh_matrix(jt.a, jt.alpha, jt.d, theta + jt.theta_offset)
    return RigidTransform.from_matrix(m)


def gripper_pose(flange_to_base: RigidTransform, fingers_to_flange: RigidTransform,
                 camera_to_fingers: RigidTransform) -> RigidTransform:
    """Camera frame -> robot base, through the finger frame and the arm flange."""
    return compose(compose(flange_to_base, fingers_to_flange), camera_to_fingers)
