"""Command-line entry point.

Every subcommand prints a JSON result on stdout.  Failures exit nonzero
with ``{"error": type, "message": text}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .detmath import (AP_THRESHOLDS, MatchMatrix, YolactOutput, YolactTargets, YolactWeights,
                      YoloGrid, YoloWeights, average_precision, combine_yolact_loss,
                      mean_average_precision, yolact_loss, yolo_loss)
from .graspplan import GraspPlanConfig, select_grasp_pair
from .sim.pipeline import run_pipeline, trajectory_csv
from .sim.scene import SceneConfig
from .tactile import TactileConfig, brightness, slip_preprocess


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fail(exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text())


def cmd_simulate(args) -> dict:
    cfg = SceneConfig.from_json(_load_json(args.scene))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    report = run_pipeline(cfg)
    doc = report.to_json()
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    if args.traces_dir:
        d = Path(args.traces_dir)
        d.mkdir(parents=True, exist_ok=True)
        for idx, trace in report.traces.items():
            (d / f"object_{idx}_trace.csv").write_text(trace.to_csv())
        (d / "trajectory.csv").write_text(trajectory_csv(report.trajectory))
    return {"report": str(args.out), "objects": len(report.objects), "successes": report.successes}


def cmd_grasp_points(args) -> dict:
    cfg = GraspPlanConfig.from_json(_load_json(args.config)) if args.config else GraspPlanConfig()
    return select_grasp_pair(io.read_ply(args.cloud), cfg).to_json()


def cmd_slip_detect(args) -> dict:
    cfg = TactileConfig.from_json(_load_json(args.config)) if args.config else TactileConfig()
    if args.threshold is not None:
        cfg = replace(cfg, subtract_threshold=args.threshold)
    if args.brightness_threshold is not None:
        cfg = replace(cfg, slip_brightness_threshold=args.brightness_threshold)
    frames = [io.read_frame(f) for f in args.frames]
    b = brightness(slip_preprocess(frames, cfg))
    return {"slip": int(b > cfg.slip_brightness_threshold), "brightness": b}


def cmd_eval_ap(args) -> dict:
    dets = io.load_detections(args.dets)
    gts = io.load_ground_truth(args.gts)
    out = {}
    for t in (float(x) for x in args.iou.split(",")):
        if args.per_class:
            m, per = mean_average_precision(dets, gts, t)
            out[f"{t:g}"] = {"mAP": m, "per_class": {str(k): v for k, v in per.items()}}
        else:
            out[f"{t:g}"] = average_precision(dets, gts, t)
    return {"ap": out}


def _losses_from_case(case: dict) -> dict:
    kind = case.get("kind")
    if kind == "yolact_components":
        w = YolactWeights(**case.get("weights", {}))
        return {"total": combine_yolact_loss(case["cls"], case["box"], case["mask"], w)}
    if kind == "yolact":
        out = YolactOutput(np.asarray(case["class_logits"], float), np.asarray(case["box_deltas"], float),
                           np.asarray(case["mask_coeffs"], float), np.asarray(case["prototypes"], float))
        gts = YolactTargets(np.asarray(case["gt_boxes"], float), np.asarray(case["gt_labels"], int),
                            np.asarray(case["gt_masks"], float))
        match = MatchMatrix.from_pairs(len(out.class_logits), len(gts.labels), case["matches"])
        terms = yolact_loss(out, gts, np.asarray(case["anchors"], float), match,
                            case.get("negatives", ()), YolactWeights(**case.get("weights", {})))
        return {"cls": terms.cls, "box": terms.box, "mask": terms.mask, "total": terms.total}
    if kind == "yolo":
        p, t = case["pred"], case["target"]
        pred = YoloGrid(p["boxes"], p["conf"], p["class_probs"])
        target = YoloGrid(t["boxes"], t["conf"], t["class_probs"], t["obj"])
        return yolo_loss(pred, target, YoloWeights(**case.get("weights", {})))
    raise ValueError(f"unknown loss case kind {kind!r}; expected yolact, yolact_components or yolo")


def cmd_losses(args) -> dict:
    return _losses_from_case(_load_json(args.case))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wastegrasp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the full pipeline on a synthetic scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--traces-dir")
    s.add_argument("--seed", type=int, help="override the scene seed")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("grasp-points", help="pick a grasp pair from an ASCII PLY cloud")
    s.add_argument("--cloud", required=True)
    s.add_argument("--config")
    s.set_defaults(func=cmd_grasp_points)

    s = sub.add_parser("slip-detect", help="slip flag for a 4-frame PGM/PPM sequence")
    s.add_argument("--frames", nargs=4, required=True, metavar="FRAME")
    s.add_argument("--config")
    s.add_argument("--threshold", type=int, help="per-pixel difference threshold (gray levels)")
    s.add_argument("--brightness-threshold", type=float)
    s.set_defaults(func=cmd_slip_detect)

    s = sub.add_parser("eval-ap", help="average precision of JSON-lines detections")
    s.add_argument("--dets", required=True)
    s.add_argument("--gts", required=True)
    s.add_argument("--iou", default=",".join(f"{t:g}" for t in AP_THRESHOLDS))
    s.add_argument("--per-class", action="store_true", help="report mAP over classes")
    s.set_defaults(func=cmd_eval_ap)

    s = sub.add_parser("losses", help="evaluate detector losses for a JSON case")
    s.add_argument("--case", required=True)
    s.set_defaults(func=cmd_losses)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(exc, 2)
    try:
        result = args.func(args)
    except Exception as exc:  # reported as JSON; the exit code carries the failure
        return _fail(exc, 1)
    sys.stdout.write(json.dumps(result) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
