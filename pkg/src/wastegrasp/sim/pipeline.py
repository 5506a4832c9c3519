"""End-to-end run: detect, localize, plan a grasp, and close the tactile loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..controller import ControllerTrace, ManipulationScenario, Mode, TICK_RATE_HZ, run_manipulation
from ..errors import WasteGraspError
from ..geometry import apply, compose, dh_forward, localize
from ..graspplan import extract_object_cloud, select_grasp_pair
from .detector import OracleDetection, oracle_detect
from .scene import RenderedScene, SceneConfig, render_scene, surface_point

TRAJECTORY_COLUMNS = ("t", "x", "y", "z", "stage")
NAV_SPEED = 0.5        # m/s
ARM_SPEED = 0.25       # m/s
SAMPLE_DT = 0.1        # s
APPROACH_HEIGHT = 0.15  # m above the grasp midpoint
LIFT_HEIGHT = 0.2


@dataclass
class RunReport:
    objects: list[dict]
    timings_ms: dict[str, float]
    traces: dict[int, ControllerTrace] = field(default_factory=dict)
    trajectory: list[tuple] = field(default_factory=list)

    def to_json(self, timings: bool = True) -> dict:
        out = {"objects": self.objects, "timings_ms": self.timings_ms}
        return out if timings else strip_timings(out)

    @property
    def successes(self) -> int:
        return sum(1 for o in self.objects if o["success"])


def strip_timings(obj):
    """Copy of a report dict without wall-clock fields."""
    if isinstance(obj, dict):
        return {k: strip_timings(v) for k, v in obj.items() if k != "timings_ms"}
    if isinstance(obj, list):
        return [strip_timings(v) for v in obj]
    return obj


class _Stopwatch:
    def __init__(self, sink: dict, name: str):
        self.sink, self.name = sink, name

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.sink[self.name] = (time.perf_counter() - self.t0) * 1e3
        return False


def _pick_pixel(det: OracleDetection, depth: np.ndarray) -> tuple[int, int, str]:
    """Box center if it lands on a valid masked pixel, else the nearest one that does."""
    h, w = depth.shape
    u = int(np.clip(np.floor(det.box[0] + 0.5), 0, w - 1))
    v = int(np.clip(np.floor(det.box[1] + 0.5), 0, h - 1))
    if det.mask[v, u] and depth[v, u] > 0:
        return u, v, "box_center"
    rows, cols = np.nonzero(det.mask & (depth > 0))
    if rows.size == 0:
        raise WasteGraspError("no valid depth inside the detection mask")
    k = int(np.argmin((cols - u) ** 2 + (rows - v) ** 2))
    return int(cols[k]), int(rows[k]), "nearest_valid"


def _error(stage: str, exc: Exception) -> dict:
    return {"stage": stage, "type": type(exc).__name__, "message": str(exc)}


def _process_object(cfg: SceneConfig, rendered: RenderedScene, det: OracleDetection):
    rec = {"object_index": det.object_index, "shape": cfg.objects[det.object_index].shape,
           "material": cfg.objects[det.object_index].material, "detection": det.to_json(),
           "pixel": None, "depth_m": None, "world_xyz": None, "truth_xyz": None,
           "localization_error_m": None, "grasp": None, "controller": None,
           "success": False, "error": None}
    timings: dict[str, float] = {}
    rec["timings_ms"] = timings
    trace = None
    stage = "localize"
    try:
        with _Stopwatch(timings, "localize"):
            u, v, source = _pick_pixel(det, rendered.depth)
            d = float(rendered.depth[v, u])
            p = localize(u, v, d, cfg.intrinsics, cfg.camera_to_lidar(),
                         cfg.lidar_to_platform_axes(), cfg.offset())
        rec.update(pixel=[u, v], pixel_source=source, depth_m=d, world_xyz=p.tolist())
        truth = surface_point(cfg, det.object_index, u, v)
        if truth is not None:
            truth = cfg.world_to_mission(truth)
            rec["truth_xyz"] = truth.tolist()
            rec["localization_error_m"] = float(np.linalg.norm(p - truth))

        stage = "cloud"
        with _Stopwatch(timings, "cloud"):
            cloud = extract_object_cloud(rendered.depth, det.mask, cfg.intrinsics)
        rec["cloud_points"] = len(cloud)

        stage = "grasp"
        with _Stopwatch(timings, "grasp"):
            pair = select_grasp_pair(cloud, cfg.grasp)
            cam_to_robot = cfg.camera_to_robot()
            robot_to_world = cfg.robot_to_world()
            pa_r, pb_r = apply(cam_to_robot, pair.p_a), apply(cam_to_robot, pair.p_b)
        width_mm = pair.width * 1e3
        rec["grasp"] = {
            "pa_camera": pair.p_a.tolist(), "pb_camera": pair.p_b.tolist(),
            "pa_robot": pa_r.tolist(), "pb_robot": pb_r.tolist(),
            "pa_world": cfg.world_to_mission(apply(robot_to_world, pa_r)).tolist(),
            "pb_world": cfg.world_to_mission(apply(robot_to_world, pb_r)).tolist(),
            "width_mm": width_mm, "quality": pair.quality, "score": pair.score,
        }

        stage = "manipulation"
        m = cfg.manipulation
        scenario = ManipulationScenario(
            object_width=width_mm,
            slip_ticks=frozenset(m.slip_ticks.get(det.object_index, ())),
            release_after_hold=m.release_after_hold,
            noise_seed=cfg.seed + det.object_index,
            max_ticks=m.max_ticks)
        with _Stopwatch(timings, "manipulation"):
            try:
                trace = run_manipulation(m.gripper(), scenario, cfg.tactile_sim, cfg.tactile)
            except WasteGraspError as exc:
                trace = getattr(exc, "trace", None)
                raise
    except (WasteGraspError, ValueError) as exc:
        rec["error"] = _error(stage, exc)
    if trace is not None:
        rec["controller"] = trace.summary()
        rec["success"] = rec["error"] is None and trace.final_mode is Mode.DONE
    return rec, trace


def run_pipeline(cfg: SceneConfig) -> RunReport:
    """Run every visible object through the full stack.

    A failing stage is recorded on its object; the remaining objects still run.
    """
    timings: dict[str, float] = {}
    with _Stopwatch(timings, "render"):
        rendered = render_scene(cfg)
    with _Stopwatch(timings, "detect"):
        detections = oracle_detect(cfg, rendered)
    objects, traces = [], {}
    for det in detections:
        rec, trace = _process_object(cfg, rendered, det)
        objects.append(rec)
        if trace is not None:
            traces[det.object_index] = trace
    timings["total"] = sum(timings.values()) + sum(
        sum(o["timings_ms"].values()) for o in objects)
    report = RunReport(objects, timings, traces)
    report.trajectory = build_trajectory(cfg, report)
    return report


def _segment(rows: list, t0: float, a, b, speed: float, stage: str) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    dist = float(np.linalg.norm(b - a))
    n = max(1, int(np.ceil(dist / speed / SAMPLE_DT)))
    for i in range(1, n + 1):
        p = a + (b - a) * (i / n)
        rows.append((t0 + i * SAMPLE_DT, *p.tolist(), stage))
    return t0 + n * SAMPLE_DT


def _dwell(rows: list, t0: float, p, duration: float, stage: str) -> float:
    n = max(1, int(np.ceil(duration / SAMPLE_DT)))
    for i in range(1, n + 1):
        rows.append((t0 + i * SAMPLE_DT, *np.asarray(p, float).tolist(), stage))
    return t0 + n * SAMPLE_DT


def build_trajectory(cfg: SceneConfig, report: RunReport) -> list[tuple]:
    """Platform and gripper path in mission coordinates, sampled every 0.1 s.

    The platform drives straight from the mission start to its pose, then the
    fingers visit each successfully planned grasp and carry it to the drop
    position.  Controller phases last as many ticks as the trace recorded.
    """
    rows = [(0.0, 0.0, 0.0, 0.0, "navigate")]
    t = _segment(rows, 0.0, np.zeros(3), cfg.offset(), NAV_SPEED, "navigate")
    robot_to_world = cfg.robot_to_world()
    home = cfg.world_to_mission(apply(robot_to_world, compose(
        dh_forward(cfg.dh, cfg.joints), cfg.effector_to_fingers).translation))
    drop = cfg.world_to_mission(apply(cfg.platform_pose, cfg.drop_position))
    for obj in report.objects:
        trace = report.traces.get(obj["object_index"])
        if obj["grasp"] is None or trace is None:
            continue
        mid = (np.asarray(obj["grasp"]["pa_world"]) + np.asarray(obj["grasp"]["pb_world"])) / 2
        above = mid + [0.0, 0.0, APPROACH_HEIGHT]
        hold = next((r.tick for r in trace if r.next_mode is Mode.HOLDING_SLIP_WATCH
                     and r.mode is Mode.CLOSING_ON_CONTACT), len(trace) - 1)
        t = _segment(rows, t, home, above, ARM_SPEED, "approach")
        t = _segment(rows, t, above, mid, ARM_SPEED, "descend")
        t = _dwell(rows, t, mid, (hold + 1) / TICK_RATE_HZ, "grasp")
        if not obj["success"]:
            t = _segment(rows, t, mid, home, ARM_SPEED, "retreat")
            continue
        lifted = mid + [0.0, 0.0, LIFT_HEIGHT]
        t = _segment(rows, t, mid, lifted, ARM_SPEED, "lift")
        t = _segment(rows, t, lifted, drop, ARM_SPEED, "transport")
        t = _dwell(rows, t, drop, (len(trace) - hold - 1) / TICK_RATE_HZ, "release")
        t = _segment(rows, t, drop, home, ARM_SPEED, "return")
    return rows


def trajectory_csv(rows: list[tuple]) -> str:
    lines = [",".join(TRAJECTORY_COLUMNS)]
    lines += [f"{t:.3f},{x:.6f},{y:.6f},{z:.6f},{stage}" for t, x, y, z, stage in rows]
    return "\n".join(lines) + "\n"
