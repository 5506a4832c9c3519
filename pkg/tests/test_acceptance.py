"""Exit criteria, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line, repeated in the terminal summary.
"""

import dataclasses
import json
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from wastegrasp.cli import main
from wastegrasp.detmath import average_precision, combine_yolact_loss, grad_check
from wastegrasp.errors import NoGraspFoundError
from wastegrasp.geometry import RigidTransform, apply
from wastegrasp.graspplan import GraspPlanConfig, PointCloud, select_grasp_pair
from wastegrasp.sim.pipeline import run_pipeline, strip_timings
from wastegrasp.sim.scene import DetectorNoise, SceneConfig, SceneObject
from wastegrasp.tactile import detect_slip, opening, slip_preprocess

from clouds import box_surface, random_blob
from detcases import GRAD_CASES, random_ap_instance
from oracles import brute_force_grasp, cross, naive_slip_map, prefix_enumeration_ap
from strategies import random_transform
from test_controller import GOLDEN, SCENARIOS, check_invariants, run_random, run_scenario

pytestmark = pytest.mark.acceptance

DEMO = Path(__file__).resolve().parents[1] / "scenes" / "demo.json"


def test_headline_dataset_numbers(criterion):
    criterion("headline dataset numbers", "NOT RUN",
              "needs a labelled field dataset, trained detector weights and robot hardware; "
              "covered instead by the property criteria below")
    pytest.skip("dataset-level figures cannot be reproduced offline")


def test_loss_weight_fidelity(criterion):
    t0 = time.perf_counter()
    total = combine_yolact_loss(1.0, 1.0, 1.0)
    elapsed = time.perf_counter() - t0
    ok = abs(total - 8.625) < 1e-12 and elapsed < 1e-3
    criterion("loss weights", ok, f"total={total!r}, {elapsed * 1e6:.1f} us")
    assert ok


def test_ap_oracle_equivalence(criterion):
    rng = np.random.default_rng(20240)
    cases = []
    for _ in range(500):
        (dets, gts), o_dets, o_gts = random_ap_instance(rng, max_dets=20, max_gts=10, n_classes=3)
        thr = float(rng.choice([0.5, 0.75, 0.9]))
        present = sorted({g[2] for g in o_gts})
        label = None if rng.random() < 0.25 else int(rng.choice(present))
        cases.append((dets, gts, o_dets, o_gts, thr, label))
    worst, elapsed = 0.0, 0.0
    for dets, gts, o_dets, o_gts, thr, label in cases:
        t0 = time.perf_counter()
        got = average_precision(dets, gts, thr, label)
        elapsed += time.perf_counter() - t0
        worst = max(worst, abs(got - prefix_enumeration_ap(o_dets, o_gts, thr, label)))
    ok = worst < 1e-12 and elapsed < 5.0
    criterion("AP oracle equivalence", ok,
              f"500 instances, max diff {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_gradient_checks(criterion):
    rng = np.random.default_rng(99)
    t0 = time.perf_counter()
    worst = {}
    for name, make in GRAD_CASES.items():
        worst[name] = max(grad_check(*make(rng)).max_rel_error for _ in range(100))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 10.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    criterion("gradient checks", ok, f"{detail}; {elapsed:.2f} s")
    assert ok


def test_slip_bit_exactness(criterion):
    rng = np.random.default_rng(7)
    naive_slip_map([np.zeros((8, 8), np.uint8)] * 4, 25, cross(7))  # compile outside the budget
    t0 = time.perf_counter()
    mismatches = 0
    for k in range(200):
        if k % 2:
            frames = [rng.integers(0, 256, (240, 320, 3), dtype=np.uint8) for _ in range(4)]
        else:
            base = rng.integers(0, 256, (240, 320), dtype=np.uint8)
            frames = [base.copy() for _ in range(4)]
            for _ in range(int(rng.integers(1, 6))):
                y, x = rng.integers(0, 220), rng.integers(0, 300)
                h, w = rng.integers(3, 60), rng.integers(3, 60)
                frames[3][y:y + h, x:x + w] = rng.integers(0, 256, dtype=np.uint8)
        mismatches += not np.array_equal(slip_preprocess(frames), naive_slip_map(frames, 25, cross(7)))
    morph_fail = 0
    for _ in range(1000):
        img = rng.random((240, 320)) < rng.uniform(0.2, 0.95)
        once = opening(img)
        morph_fail += not (np.array_equal(opening(once), once) and not np.any(once.astype(bool) & ~img))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and morph_fail == 0 and elapsed < 30.0
    criterion("slip bit-exactness", ok,
              f"{mismatches}/200 mismatches, {morph_fail}/1000 opening violations, {elapsed:.1f} s")
    assert ok


def test_slip_latency(criterion):
    rng = np.random.default_rng(3)
    frames = [rng.integers(0, 256, (240, 320, 3), dtype=np.uint8) for _ in range(4)]
    detect_slip(frames)
    times = []
    for _ in range(1000):
        t0 = time.perf_counter()
        detect_slip(frames)
        times.append(time.perf_counter() - t0)
    med = statistics.median(times) * 1e3
    ok = med <= 10.0
    criterion("slip latency", ok, f"median {med:.2f} ms over 1000 runs")
    assert ok


def test_grasp_oracle_equivalence(criterion):
    rng = np.random.default_rng(11)
    cfg = GraspPlanConfig(k_neighbors=10)
    impl_time, bad, found = 0.0, [], 0
    for k in range(100):
        pts = random_blob(rng, int(rng.integers(40, 301)))
        t0 = time.perf_counter()
        try:
            pair = select_grasp_pair(PointCloud(pts), cfg)
        except NoGraspFoundError:
            pair = None
        impl_time += time.perf_counter() - t0
        o = brute_force_grasp(pts, cfg.k_neighbors, cfg.plane_band, cfg.opposition_min_angle,
                              cfg.plane_parallel_max_angle, cfg.max_width)
        if o is None or pair is None:
            if (o is None) != (pair is None):
                bad.append(k)
            continue
        found += 1
        if (pair.index_a, pair.index_b) != o[:2] and abs(pair.score - o[2]) >= 1e-9:
            bad.append(k)
    ok = not bad and impl_time < 60.0
    criterion("grasp oracle equivalence", ok,
              f"100 clouds ({found} with a grasp), mismatches {bad}, {impl_time:.2f} s")
    assert ok


def test_grasp_equivariance(criterion):
    pts = box_surface(np.random.default_rng(5), (0.05, 0.07, 0.18), 300)
    cfg = GraspPlanConfig(k_neighbors=12)
    base = select_grasp_pair(PointCloud(pts), cfg)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        t = random_transform(rng, scale=2.0)
        moved = select_grasp_pair(PointCloud(apply(t, pts)), cfg)
        worst = max(worst, np.abs(moved.p_a - apply(t, base.p_a)).max(),
                    np.abs(moved.p_b - apply(t, base.p_b)).max())
    ok = worst < 1e-6
    criterion("grasp equivariance", ok, f"50 motions, max deviation {worst:.2e} m")
    assert ok


def test_transform_chain(criterion):
    cfg = SceneConfig.from_json(json.loads(DEMO.read_text()))
    cam = cfg.camera_to_world()
    rng = np.random.default_rng(8)
    errors = []
    for depth in np.linspace(0.3, 3.0, 10):
        x, y = rng.uniform(-0.3, 0.3, 2) * depth
        obj = SceneObject("sphere", RigidTransform(np.eye(3), apply(cam, [x, y, depth + 0.03])), (0.03,))
        scene = dataclasses.replace(cfg, objects=(obj,), detector=DetectorNoise(), depth_quantization=0.0)
        rec = run_pipeline(scene).objects[0]
        errors.append(rec["localization_error_m"])
    ok = all(e is not None and e < 0.005 for e in errors)
    criterion("transform chain", ok, f"depths 0.3-3.0 m, max error {max(errors) * 1e3:.2e} mm")
    assert ok


def test_controller_conformance(criterion):
    golden = {name: run_scenario(name)[0].to_csv() == (GOLDEN / f"{name}.csv").read_text()
              for name in sorted(SCENARIOS)}
    violations = []
    for seed in range(1000):
        trace, done = run_random(seed)
        try:
            check_invariants(trace, done)
        except AssertionError:
            violations.append(seed)
    ok = all(golden.values()) and not violations
    criterion("controller conformance", ok, f"golden {golden}, invariant violations {violations[:10]}")
    assert ok


def test_end_to_end_determinism(criterion, tmp_path, capsys):
    docs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        assert main(["simulate", "--scene", str(DEMO), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        docs.append(json.dumps(strip_timings(doc), sort_keys=True))
    capsys.readouterr()
    ok = docs[0] == docs[1]
    criterion("end-to-end determinism", ok, f"report {len(docs[0])} bytes, identical={ok}")
    assert ok

