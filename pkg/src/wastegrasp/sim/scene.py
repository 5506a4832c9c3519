"""Synthetic scenes: primitive objects seen by a wrist-mounted depth camera.

The camera pose follows the arm chain: world <- platform <- robot base <-
flange (DH) <- fingers <- camera.  The camera-to-LiDAR extrinsic used for
localization is derived from that same chain, as a calibration would give.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..controller import GripperModel
from ..geometry import (UR5E, DhChain, Intrinsics, RigidTransform, apply, compose, dh_forward,
                        gripper_pose, invert, mission_offset, rotation_from_rpy)
from ..graspplan import GraspPlanConfig
from ..tactile import TactileConfig, TactileSimParams

log = logging.getLogger(__name__)

SHAPES = ("box", "cylinder", "sphere")


def _pose_from_json(obj) -> RigidTransform:
    if obj is None:
        return RigidTransform.identity()
    if "r" in obj:
        return RigidTransform.from_json(obj)
    rpy = obj.get("rpy", (0.0, 0.0, 0.0))
    return RigidTransform(rotation_from_rpy(*rpy), np.asarray(obj.get("position", (0, 0, 0)), float))


def _sim_params(obj: dict) -> TactileSimParams:
    obj = dict(obj)
    if "blob_semi_axes" in obj:
        obj["blob_semi_axes"] = tuple(obj["blob_semi_axes"])
    return TactileSimParams(**obj)


@dataclass(frozen=True)
class SceneObject:
    shape: str
    pose: RigidTransform              # object -> world
    size: tuple[float, ...]           # box: (sx, sy, sz); cylinder: (radius, height); sphere: (radius,)
    label: int = 1
    material: str = "plastic"

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        want = {"box": 3, "cylinder": 2, "sphere": 1}[self.shape]
        if len(self.size) != want or min(self.size) <= 0:
            raise ValueError(f"{self.shape} needs {want} positive size values, got {self.size}")

    @classmethod
    def from_json(cls, obj: dict) -> "SceneObject":
        shape = obj["shape"]
        if shape == "box":
            size = tuple(obj["size"])
        elif shape == "cylinder":
            size = (obj["radius"], obj["height"])
        else:
            size = (obj["radius"],)
        return cls(shape, _pose_from_json(obj.get("pose", obj)), tuple(float(s) for s in size),
                   int(obj.get("label", 1)), obj.get("material", "plastic"))


@dataclass(frozen=True)
class DetectorNoise:
    box_jitter_px: float = 0.0
    mask_erosion_steps: int = 0
    label_flip_prob: float = 0.0
    n_classes: int = 2


@dataclass(frozen=True)
class ManipulationConfig:
    start_opening: float = 140.0
    close_step: float = 1.0
    min_opening: float = 0.0
    release_after_hold: int = 45
    slip_ticks: dict = field(default_factory=dict)   # object index -> list of ticks
    max_ticks: int = 1000

    def gripper(self) -> GripperModel:
        return GripperModel(self.start_opening, self.close_step, self.min_opening)


@dataclass(frozen=True)
class SceneConfig:
    width: int
    height: int
    intrinsics: Intrinsics
    platform_pose: RigidTransform            # platform -> world
    mission_start: np.ndarray                # world position where the mission began
    lidar_mount: RigidTransform              # LiDAR -> platform
    arm_base: RigidTransform                 # robot base -> platform
    dh: DhChain
    joints: tuple[float, ...]
    effector_to_fingers: RigidTransform      # fingers -> flange
    camera_to_fingers: RigidTransform        # camera -> fingers
    objects: tuple[SceneObject, ...] = ()
    detector: DetectorNoise = DetectorNoise()
    depth_quantization: float = 0.0          # m; 0 keeps float depth
    glass_dropout: float = 0.7               # share of glass pixels with no depth return
    grasp: GraspPlanConfig = GraspPlanConfig()
    tactile: TactileConfig = TactileConfig()
    tactile_sim: TactileSimParams = TactileSimParams()
    manipulation: ManipulationConfig = ManipulationConfig()
    drop_position: tuple[float, float, float] = (-0.3, 0.0, 0.9)   # platform frame
    seed: int = 0
    offset_convention: str = "current_minus_start"
    camera_pose: RigidTransform | None = None   # camera -> world; overrides the arm chain

    @classmethod
    def from_json(cls, obj: dict) -> "SceneConfig":
        img = obj.get("image", {})
        w, h = int(img.get("width", 640)), int(img.get("height", 480))
        k = Intrinsics(float(img.get("fx", 615.0)), float(img.get("fy", 615.0)),
                       float(img.get("cx", (w - 1) / 2)), float(img.get("cy", (h - 1) / 2)))
        plat = obj.get("platform", {})
        arm = obj.get("arm", {})
        dh = arm.get("dh", "ur5e")
        chain = UR5E if dh == "ur5e" else DhChain.from_json(dh)
        joints = tuple(float(q) for q in arm.get("joints", (0.0, -math.pi / 2, math.pi / 2,
                                                             -math.pi / 2, -math.pi / 2, 0.0)))
        render = obj.get("render", {})
        manip = dict(obj.get("manipulation", {}))
        if "slip_ticks" in manip:
            manip["slip_ticks"] = {int(i): [int(t) for t in ticks] for i, ticks in manip["slip_ticks"].items()}
        return cls(
            width=w, height=h, intrinsics=k,
            platform_pose=_pose_from_json(plat.get("pose")),
            mission_start=np.asarray(plat.get("mission_start", (0.0, 0.0, 0.0)), float),
            lidar_mount=_pose_from_json(obj.get("lidar_mount")),
            arm_base=_pose_from_json(arm.get("base_mount")),
            dh=chain, joints=joints,
            effector_to_fingers=_pose_from_json(arm.get("effector_to_fingers")),
            camera_to_fingers=_pose_from_json(arm.get("camera_to_fingers")),
            objects=tuple(SceneObject.from_json(o) for o in obj.get("objects", [])),
            detector=DetectorNoise(**obj.get("detector", {})),
            depth_quantization=float(render.get("depth_quantization", 0.0)),
            glass_dropout=float(render.get("glass_dropout", 0.7)),
            grasp=GraspPlanConfig.from_json(obj.get("grasp", {})),
            tactile=TactileConfig.from_json(obj.get("tactile", {})),
            tactile_sim=_sim_params(obj.get("tactile_sim", {})),
            manipulation=ManipulationConfig(**manip),
            drop_position=tuple(obj.get("drop_position", (-0.3, 0.0, 0.9))),
            seed=int(obj.get("seed", 0)),
            offset_convention=plat.get("offset_convention", "current_minus_start"),
            camera_pose=_pose_from_json(obj["camera_pose"]) if "camera_pose" in obj else None,
        )

    # -- frame chain -------------------------------------------------------

    def camera_to_robot(self) -> RigidTransform:
        """Camera frame -> robot base through the arm chain."""
        if self.camera_pose is not None:
            return compose(invert(self.robot_to_world()), self.camera_pose)
        return gripper_pose(dh_forward(self.dh, self.joints), self.effector_to_fingers,
                            self.camera_to_fingers)

    def camera_to_world(self) -> RigidTransform:
        if self.camera_pose is not None:
            return self.camera_pose
        return compose(self.platform_pose, compose(self.arm_base, self.camera_to_robot()))

    def robot_to_world(self) -> RigidTransform:
        return compose(self.platform_pose, self.arm_base)

    def camera_to_lidar(self) -> RigidTransform:
        """Camera -> LiDAR extrinsic, derived from the mounting chain."""
        return compose(invert(self.lidar_mount), compose(self.arm_base, self.camera_to_robot()))

    def lidar_to_platform_axes(self) -> RigidTransform:
        """LiDAR -> platform with the platform heading applied, i.e. in world axes."""
        heading = RigidTransform(self.platform_pose.rotation, np.zeros(3))
        return compose(heading, self.lidar_mount)

    def offset(self) -> np.ndarray:
        return mission_offset(self.platform_pose.translation, self.mission_start, self.offset_convention)

    def world_to_mission(self, p) -> np.ndarray:
        return np.asarray(p, float) - self.mission_start


@dataclass(frozen=True, eq=False)
class RenderedScene:
    depth: np.ndarray                  # (H, W) z-depth in meters, 0 = no return
    masks: dict[int, np.ndarray]       # object index -> (H, W) bool, visible objects only
    hit_t: np.ndarray                  # (H, W) exact ray parameter before noise, inf = miss
    hit_object: np.ndarray             # (H, W) object index, -1 = miss


def camera_rays(cfg: SceneConfig) -> np.ndarray:
    """(H, W, 3) camera-frame ray directions with unit z component."""
    k = cfg.intrinsics
    v, u = np.mgrid[0:cfg.height, 0:cfg.width].astype(float)
    return np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)


def _solve_quadratic_near(a, b, c):
    """Smallest positive root of a t^2 + 2 b t + c = 0, inf if none."""
    disc = b * b - a * c
    ok = (disc >= 0) & (a > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    safe_a = np.where(a > 0, a, 1.0)
    t0 = (-b - sq) / safe_a
    t1 = (-b + sq) / safe_a
    t = np.where(t0 > 0, t0, np.where(t1 > 0, t1, np.inf))
    return np.where(ok, t, np.inf)


def intersect(obj: SceneObject, origin, dirs) -> np.ndarray:
    """Ray parameter of the first hit with ``obj``; inf where the ray misses.

    ``origin`` is a world point, ``dirs`` an (..., 3) array of world
    directions (not necessarily unit).
    """
    inv = invert(obj.pose)
    o = apply(inv, origin)
    d = np.asarray(dirs, float) @ inv.rotation.T
    if obj.shape == "sphere":
        r = obj.size[0]
        return _solve_quadratic_near((d * d).sum(-1), d @ o, o @ o - r * r)
    if obj.shape == "box":
        half = np.asarray(obj.size) / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half - o) / d
            t2 = (half - o) / d
        parallel = d == 0
        inside = np.abs(o) <= half
        lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        tmin, tmax = lo.max(-1), hi.min(-1)
        hit = (tmax >= tmin) & (tmax > 0)
        return np.where(hit, np.where(tmin > 0, tmin, tmax), np.inf)
    r, hh = obj.size[0], obj.size[1] / 2.0
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    t_side = _solve_quadratic_near(dx * dx + dy * dy, o[0] * dx + o[1] * dy, o[0] ** 2 + o[1] ** 2 - r * r)
    z_side = o[2] + np.where(np.isfinite(t_side), t_side, 0.0) * dz
    t_side = np.where(np.abs(z_side) <= hh, t_side, np.inf)
    best = t_side
    with np.errstate(divide="ignore", invalid="ignore"):
        for cap in (-hh, hh):
            t = (cap - o[2]) / dz
            x, y = o[0] + t * dx, o[1] + t * dy
            ok = (dz != 0) & (t > 0) & (x * x + y * y <= r * r)
            best = np.minimum(best, np.where(ok, t, np.inf))
    return best


def render_scene(cfg: SceneConfig) -> RenderedScene:
    """Ray-cast z-depth and per-object visibility masks."""
    cam = cfg.camera_to_world()
    dirs_world = camera_rays(cfg) @ cam.rotation.T
    origin = cam.translation
    best_t = np.full((cfg.height, cfg.width), np.inf)
    best_obj = np.full((cfg.height, cfg.width), -1, dtype=int)
    cam_inv = invert(cam)
    for idx, obj in enumerate(cfg.objects):
        if apply(cam_inv, obj.pose.translation)[2] <= 0:
            log.warning("object %d is behind the camera; excluded", idx)
            continue
        t = intersect(obj, origin, dirs_world)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_obj = np.where(closer, idx, best_obj)

    # Rays have unit camera-z, so the ray parameter is the z-depth.
    depth = np.where(np.isfinite(best_t), best_t, 0.0)
    if cfg.depth_quantization > 0:
        depth = np.round(depth / cfg.depth_quantization) * cfg.depth_quantization
    rng = np.random.default_rng([cfg.seed, 1])
    masks = {}
    for idx, obj in enumerate(cfg.objects):
        m = best_obj == idx
        if not m.any():
            continue
        masks[idx] = m
        if obj.material == "glass" and cfg.glass_dropout > 0:
            drop = m & (rng.random(m.shape) < cfg.glass_dropout)
            depth[drop] = 0.0
    return RenderedScene(depth, masks, best_t, best_obj)


def surface_point(cfg: SceneConfig, obj_index: int, u: int, v: int) -> np.ndarray | None:
    """World point where pixel (u, v)'s ray first meets object ``obj_index``."""
    cam = cfg.camera_to_world()
    k = cfg.intrinsics
    d = cam.rotation @ np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
    t = float(intersect(cfg.objects[obj_index], cam.translation, d[None, :])[0])
    if not math.isfinite(t):
        return None
    return cam.translation + t * d
