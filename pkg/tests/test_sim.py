import dataclasses
import json
import logging
import math
from pathlib import Path

import numpy as np
import pytest

from wastegrasp.controller import Mode
from wastegrasp.geometry import RigidTransform, apply, rotation_from_rpy
from wastegrasp.sim.detector import mask_box, oracle_detect
from wastegrasp.sim.pipeline import (TRAJECTORY_COLUMNS, run_pipeline, strip_timings,
                                     trajectory_csv)
from wastegrasp.sim.scene import (DetectorNoise, SceneConfig, SceneObject, render_scene,
                                  surface_point)

DEMO = Path(__file__).resolve().parents[1] / "scenes" / "demo.json"


def small_scene(objects=(), **extra):
    """Camera at the world origin looking along +z, 161 x 121 pixels."""
    obj = {"image": {"width": 161, "height": 121, "fx": 100.0, "fy": 100.0, "cx": 80.0, "cy": 60.0},
           "camera_pose": {"position": [0, 0, 0]}, "objects": list(objects)}
    obj.update(extra)
    return SceneConfig.from_json(obj)


def sphere(pos, r, **kw):
    return {"shape": "sphere", "radius": r, "position": list(pos), **kw}


@pytest.fixture(scope="module")
def demo_cfg():
    return SceneConfig.from_json(json.loads(DEMO.read_text()))


@pytest.fixture(scope="module")
def demo_report(demo_cfg):
    return run_pipeline(demo_cfg)


# -- rendering -----------------------------------------------------------------------

def test_empty_scene():
    r = render_scene(small_scene())
    assert np.all(r.depth == 0) and r.masks == {}


def test_unit_sphere_on_axis():
    cfg = small_scene([sphere((0, 0, 2), 1.0)])
    r = render_scene(cfg)
    assert r.depth[60, 80] == pytest.approx(1.0, abs=1e-12)
    assert r.depth[r.depth > 0].min() == pytest.approx(1.0, abs=1e-12)
    # Ray (x, y, 1) meets the sphere iff x^2 + y^2 <= 1/3.
    v, u = np.mgrid[0:121, 0:161]
    rho2 = ((u - 80) / 100.0) ** 2 + ((v - 60) / 100.0) ** 2
    np.testing.assert_array_equal(r.masks[0], rho2 <= 1 / 3)


def test_sphere_depth_matches_closed_form():
    r = render_scene(small_scene([sphere((0, 0, 2), 1.0)]))
    u, v = 100, 70
    x, y = (u - 80) / 100.0, (v - 60) / 100.0
    a = 1 + x * x + y * y
    t = (2 - math.sqrt(4 - 3 * a)) / a    # nearer root of a t^2 - 4 t + 3 = 0
    assert r.depth[v, u] == pytest.approx(t, rel=1e-12)


def test_two_disjoint_masks():
    cfg = small_scene([sphere((-0.5, 0, 2), 0.2), {"shape": "box", "size": [0.3, 0.3, 0.3],
                                                  "position": [0.5, 0, 2]}])
    r = render_scene(cfg)
    assert set(r.masks) == {0, 1}
    assert r.masks[0].any() and r.masks[1].any()
    assert not np.any(r.masks[0] & r.masks[1])


def test_box_front_face_depth():
    cfg = small_scene([{"shape": "box", "size": [0.4, 0.4, 0.2], "position": [0, 0, 1.5]}])
    r = render_scene(cfg)
    assert r.depth[60, 80] == pytest.approx(1.4, abs=1e-12)


def test_cylinder_cap_and_side():
    # Axis along camera z: the near cap faces the camera.
    cap = small_scene([{"shape": "cylinder", "radius": 0.2, "height": 0.4, "position": [0, 0, 2]}])
    assert render_scene(cap).depth[60, 80] == pytest.approx(1.8, abs=1e-12)
    # Axis along world y: the side faces the camera.
    side = small_scene([{"shape": "cylinder", "radius": 0.2, "height": 0.4, "position": [0, 0, 2],
                         "rpy": [math.pi / 2, 0, 0]}])
    assert render_scene(side).depth[60, 80] == pytest.approx(1.8, abs=1e-12)


def test_occlusion_keeps_nearer_object():
    cfg = small_scene([sphere((0, 0, 3), 0.5), sphere((0, 0, 1.5), 0.2)])
    r = render_scene(cfg)
    assert r.hit_object[60, 80] == 1
    assert r.depth[60, 80] == pytest.approx(1.3, abs=1e-12)


def test_object_behind_camera_is_excluded(caplog):
    cfg = small_scene([sphere((0, 0, -2), 0.5), sphere((0, 0, 2), 0.5)])
    with caplog.at_level(logging.WARNING):
        r = render_scene(cfg)
    assert set(r.masks) == {1}
    assert any("behind the camera" in m for m in caplog.messages)


def test_quantization():
    cfg = small_scene([sphere((0, 0, 2), 1.0)], render={"depth_quantization": 0.01})
    d = render_scene(cfg).depth
    valid = d > 0
    np.testing.assert_allclose(d[valid] / 0.01, np.round(d[valid] / 0.01), atol=1e-9)


def test_glass_dropout_removes_share_of_depth():
    cfg = small_scene([sphere((0, 0, 2), 1.0, material="glass")], seed=3)
    r = render_scene(cfg)
    m = r.masks[0]
    dropped = np.mean(r.depth[m] == 0)
    assert 0.65 < dropped < 0.75
    np.testing.assert_array_equal(render_scene(cfg).depth, r.depth)


def test_surface_point_lies_on_sphere():
    cfg = small_scene([sphere((0.1, -0.05, 2), 0.5)])
    p = surface_point(cfg, 0, 90, 55)
    assert np.linalg.norm(p - [0.1, -0.05, 2]) == pytest.approx(0.5, abs=1e-12)
    assert surface_point(cfg, 0, 0, 0) is None


def test_scene_object_validation():
    with pytest.raises(ValueError):
        SceneObject("cone", RigidTransform.identity(), (1.0,))
    with pytest.raises(ValueError):
        SceneObject("box", RigidTransform.identity(), (1.0, 0.0, 1.0))


# -- oracle detector ---------------------------------------------------------------------

def _two_objects(**extra):
    return small_scene([sphere((-0.5, 0, 2), 0.2, label=1), sphere((0.5, 0.1, 2), 0.3, label=2)], **extra)


def test_noise_free_detections_are_ground_truth():
    cfg = _two_objects()
    r = render_scene(cfg)
    dets = oracle_detect(cfg, r)
    assert [d.object_index for d in dets] == [0, 1]
    for d in dets:
        np.testing.assert_array_equal(d.mask, r.masks[d.object_index])
        assert d.box == mask_box(r.masks[d.object_index])
        assert d.label == cfg.objects[d.object_index].label


def test_mask_box_by_hand():
    m = np.zeros((10, 10), bool)
    m[2:5, 3:9] = True
    assert mask_box(m) == (5.5, 3.0, 6.0, 3.0)


def test_jitter_is_seeded():
    cfg = _two_objects(detector={"box_jitter_px": 2.0}, seed=11)
    r = render_scene(cfg)
    a = [d.box for d in oracle_detect(cfg, r)]
    b = [d.box for d in oracle_detect(cfg, r)]
    assert a == b
    truth = [mask_box(r.masks[i]) for i in (0, 1)]
    assert a != truth
    # Same draws as a generator seeded the same way.
    rng = np.random.default_rng([11, 2])
    for box, t in zip(a, truth):
        j = rng.normal(0.0, 2.0, 4)
        np.testing.assert_allclose(box, [t[0] + j[0], t[1] + j[1], max(1, t[2] + j[2]), max(1, t[3] + j[3])])
    other = dataclasses.replace(cfg, seed=12)
    assert [d.box for d in oracle_detect(other, r)] != a


def test_label_flip_all():
    cfg = _two_objects(detector={"label_flip_prob": 1.0, "n_classes": 2})
    dets = oracle_detect(cfg, render_scene(cfg))
    assert [d.label for d in dets] == [2, 1]


def test_erosion_shrinks_masks():
    cfg = _two_objects()
    r = render_scene(cfg)
    eroded = oracle_detect(cfg, r, DetectorNoise(mask_erosion_steps=2))
    for d in eroded:
        full = r.masks[d.object_index]
        assert not np.any(d.mask & ~full) and d.mask.sum() < full.sum()


# -- pipeline ----------------------------------------------------------------------------

def test_demo_cylinder_grasp(demo_report):
    cyl = demo_report.objects[0]
    assert cyl["shape"] == "cylinder" and cyl["error"] is None
    assert 58.0 <= cyl["grasp"]["width_mm"] <= 62.0
    assert cyl["success"]


def test_glass_is_recorded_not_crashed(demo_report):
    glass = [o for o in demo_report.objects if o["material"] == "glass"]
    assert glass and all(o["error"] is not None and not o["success"] for o in glass)
    assert glass[0]["error"]["stage"] in ("localize", "cloud", "grasp")


def test_failure_does_not_stop_later_objects(demo_report, demo_cfg):
    assert len(demo_report.objects) == len(demo_cfg.objects)
    failed = [o["object_index"] for o in demo_report.objects if o["error"]]
    succeeded = [o["object_index"] for o in demo_report.objects if o["success"]]
    assert failed and succeeded and min(failed) < max(succeeded)


def test_success_implies_done(demo_report):
    for o in demo_report.objects:
        if o["success"]:
            assert o["controller"]["final_mode"] == Mode.DONE.value
            assert demo_report.traces[o["object_index"]].final_mode is Mode.DONE


def test_demo_localization(demo_report):
    for o in demo_report.objects:
        if o["localization_error_m"] is not None:
            assert o["localization_error_m"] < 0.005


def test_timings_nonnegative(demo_report):
    assert all(v >= 0 for v in demo_report.timings_ms.values())
    for o in demo_report.objects:
        assert all(v >= 0 for v in o["timings_ms"].values())


def test_report_is_json_serializable(demo_report):
    json.dumps(demo_report.to_json())
    assert "timings_ms" not in json.dumps(demo_report.to_json(timings=False))


def test_trajectory_csv(demo_report):
    text = trajectory_csv(demo_report.trajectory)
    lines = text.strip().splitlines()
    assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
    times = [float(l.split(",")[0]) for l in lines[1:]]
    assert times == sorted(times)
    stages = {l.split(",")[-1] for l in lines[1:]}
    assert {"navigate", "approach", "grasp", "release"} <= stages


def _localization_scene(demo_cfg, cam_points, quant=0.0, convention=None):
    cam = demo_cfg.camera_to_world()
    objects = tuple(SceneObject("sphere", RigidTransform(np.eye(3), apply(cam, p)), (0.03,), 1)
                    for p in cam_points)
    kw = {"objects": objects, "depth_quantization": quant, "detector": DetectorNoise()}
    if convention:
        kw["offset_convention"] = convention
    return dataclasses.replace(demo_cfg, **kw)


DEPTHS = [(0.0, 0.0, 0.5), (0.3, -0.2, 1.2), (-0.6, 0.3, 2.0), (0.8, 0.5, 3.0)]


def test_localization_error_up_to_three_meters(demo_cfg):
    # Each sphere gets its own run so none occludes another.
    for p in DEPTHS:
        rep = run_pipeline(_localization_scene(demo_cfg, [p]))
        assert rep.objects[0]["localization_error_m"] < 0.005


def test_quantization_bounds_localization_error(demo_cfg):
    q = 0.002
    k = demo_cfg.intrinsics
    for p in DEPTHS[1:3]:
        rep = run_pipeline(_localization_scene(demo_cfg, [p], quant=q))
        o = rep.objects[0]
        u, v = o["pixel"]
        ray = math.hypot((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0)
        assert o["localization_error_m"] <= q / 2 * ray + 1e-9


def test_wrong_offset_convention_is_visible(demo_cfg):
    rep = run_pipeline(_localization_scene(demo_cfg, [DEPTHS[1]], convention="start_minus_current"))
    offset = np.linalg.norm(demo_cfg.platform_pose.translation - demo_cfg.mission_start)
    assert rep.objects[0]["localization_error_m"] == pytest.approx(2 * offset, rel=1e-9)


def test_determinism(demo_cfg, demo_report):
    again = run_pipeline(demo_cfg)
    a = json.dumps(demo_report.to_json(timings=False), sort_keys=True)
    b = json.dumps(again.to_json(timings=False), sort_keys=True)
    assert a == b
    assert demo_report.trajectory == again.trajectory


def test_strip_timings_nested():
    assert strip_timings({"a": [{"timings_ms": 1, "b": 2}], "timings_ms": {}}) == {"a": [{"b": 2}]}


def test_rotated_camera_pose_override():
    rot = RigidTransform(rotation_from_rpy(0.0, math.pi / 2, 0.0), np.array([1.0, 2.0, 0.5]))
    obj = {"image": {"width": 161, "height": 121, "fx": 100.0, "fy": 100.0, "cx": 80.0, "cy": 60.0},
           "camera_pose": rot.to_json(), "objects": []}
    cfg = SceneConfig.from_json(obj)
    center = apply(rot, [0.0, 0.0, 2.0])
    cfg = dataclasses.replace(cfg, objects=(SceneObject("sphere", RigidTransform(np.eye(3), center), (1.0,)),))
    assert render_scene(cfg).depth[60, 80] == pytest.approx(1.0, abs=1e-12)
