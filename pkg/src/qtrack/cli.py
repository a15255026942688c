"""Command-line entry point: ``qtrack {track,eval,simulate,match,selfcheck}``.

Results go to files or standard output. Errors go to standard error as
``qtrack: error[CODE]: message`` with a nonzero exit status.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .assignment import MatchCostWeights, Prediction, Target, match_predictions_to_gt
from .evaluation import track_map
from .geometry import FrameSize
from .io import (FormatError, dumps, parse_detection_file, parse_gt_file, parse_track_file,
                 serialize_track_file, tracks_to_track_file)
from .selfcheck import run_all
from .simgen import ScenarioConfig, ScenarioError, generate_scenario, scenario_to_detfile, scenario_to_gtfile
from .tracker import AssocConfig, track_video

log = logging.getLogger("qtrack")

EXIT_INPUT = 2
EXIT_CHECK = 1

# flag dest -> config field
ASSOC_FLAGS = {
    "topk": "top_k",
    "tau_new": "tau_new",
    "momentum": "memory_momentum",
    "keep_alive": "keep_alive_frames",
    "emit_threshold": "emit_score_threshold",
    "assign_mode": "assign_mode",
    "normalize_embeddings": "normalize_embeddings",
}
WEIGHT_FLAGS = {
    "lambda_cls": "lambda_cls",
    "lambda_l1": "lambda_l1",
    "lambda_giou": "lambda_giou",
    "alpha": "alpha",
    "gamma": "gamma",
    "cls_cost_form": "cls_cost_form",
}


class CLIError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _read(path) -> bytes:
    try:
        return sys.stdin.buffer.read() if str(path) == "-" else Path(path).read_bytes()
    except OSError as exc:
        raise CLIError("E_IO", str(exc)) from None


def _write(path, data: bytes):
    if path is None or str(path) == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise CLIError("E_IO", str(exc)) from None


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise CLIError("E_CONFIG", f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise CLIError("E_CONFIG", "config must be a JSON object")
    return cfg


def _build(cls, flag_map, args, file_cfg):
    known = {f.name for f in fields(cls)}
    values = {k: v for k, v in file_cfg.items() if k in known}
    for flag, name in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[name] = value
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise CLIError("E_CONFIG", str(exc)) from None


def _add_weight_flags(p):
    g = p.add_argument_group("matching cost")
    g.add_argument("--lambda-cls", type=float)
    g.add_argument("--lambda-l1", type=float)
    g.add_argument("--lambda-giou", type=float)
    g.add_argument("--alpha", type=float, help="focal alpha of the classification cost")
    g.add_argument("--gamma", type=float, help="focal gamma of the classification cost")
    g.add_argument("--cls-cost-form", choices=["difference", "positive_only"])


def cmd_track(args) -> int:
    file_cfg = _load_config(args.config)
    cfg = _build(AssocConfig, ASSOC_FLAGS, args, file_cfg)
    weights = _build(MatchCostWeights, WEIGHT_FLAGS, args, file_cfg)
    df = parse_detection_file(_read(args.detections))
    tracks = track_video(df.frames, cfg)
    log.info("%s: %d frames -> %d tracks", df.video_id, len(df.frames), len(tracks))
    meta = {"config": {**asdict(cfg), "keep_alive_frames": _json_number(cfg.keep_alive_frames)},
            "match_weights": asdict(weights)}
    _write(args.output, serialize_track_file(tracks_to_track_file(tracks, df.video_id, meta)))
    return 0


def _json_number(x):
    return None if x == float("inf") else x


def cmd_eval(args) -> int:
    preds = []
    for path in args.pred:
        preds.extend(parse_track_file(_read(path)).tracks)
    gts = []
    for path in args.gt:
        gts.extend(parse_gt_file(_read(path)).tracks)
    report = track_map(preds, gts, recall_points=args.recall_points)
    doc = report.to_json()
    if args.json:
        _write(args.json, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
    if args.report_dir:
        from .plotting import write_report
        for path in write_report(report, args.report_dir):
            log.info("wrote %s", path)
    print(json.dumps(doc, sort_keys=True))
    print(report.table())
    return 0


def cmd_simulate(args) -> int:
    try:
        cfg = ScenarioConfig(
            num_objects=args.objects, num_frames=args.frames, frame_width=args.width,
            frame_height=args.height, num_classes=args.classes, embedding_dim=args.dim,
            embedding_noise_sigma=args.sigma, box_jitter=args.jitter,
            false_positive_rate=args.fp_rate, with_masks=not args.no_masks,
        )
        scenario = generate_scenario(cfg, args.seed, args.video_id)
    except ScenarioError as exc:
        raise CLIError("E_SCENARIO", str(exc)) from None
    _write(args.det_out, scenario_to_detfile(scenario))
    _write(args.gt_out, scenario_to_gtfile(scenario))
    log.info("simulated %d detections over %d frames", scenario.num_detections, cfg.num_frames)
    return 0


def cmd_match(args) -> int:
    """Bind each frame's detections to ground-truth boxes with the composite matching cost."""
    weights = _build(MatchCostWeights, WEIGHT_FLAGS, args, _load_config(args.config))
    df = parse_detection_file(_read(args.detections))
    gt = parse_gt_file(_read(args.gt))
    frame = FrameSize(args.width, args.height)
    gt_by_frame = {}
    for t in gt.tracks:
        for f, box, _ in t.records:
            gt_by_frame.setdefault(f, []).append((t.identity, Target(t.class_id, box)))
    num_classes = 1 + max([d.class_id for _, ds in df.frames for d in ds] +
                          [t.class_id for t in gt.tracks] + [0])
    out = []
    for index, dets in df.frames:
        targets = gt_by_frame.get(index, [])
        preds = []
        for d in dets:
            probs = np.zeros(num_classes)
            probs[d.class_id] = d.score
            preds.append(Prediction(probs, d.box))
        result = match_predictions_to_gt(preds, [t for _, t in targets], weights, frame)
        out.append({"frame_index": index, "total_cost": result.total_cost,
                    "pairs": [{"detection": i, "identity": targets[j][0]} for i, j in result.pairs]})
    _write(args.output, dumps({"format_version": 1, "video_id": df.video_id, "frames": out}))
    return 0


def cmd_selfcheck(args) -> int:
    results = run_all()
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("selfcheck: " + ("all suites passed" if ok else "FAILED"))
    return 0 if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="associate detections into tracks")
    p.add_argument("detections", help="detection JSON file, or - for stdin")
    p.add_argument("-o", "--output", help="track JSON file (default: stdout)")
    p.add_argument("--config", help="JSON file with association/matching parameters; flags override it")
    p.add_argument("--topk", type=int)
    p.add_argument("--tau-new", type=float)
    p.add_argument("--momentum", type=float, help="memory embedding momentum in [0, 1]")
    p.add_argument("--keep-alive", type=float, help="frames a track may stay unmatched (default: forever)")
    p.add_argument("--emit-threshold", type=float, help="drop tracks whose best score is below this")
    p.add_argument("--assign-mode", choices=["greedy", "hungarian"])
    p.add_argument("--normalize-embeddings", action="store_true", default=None)
    _add_weight_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="track AP/AR and ID switches against ground truth")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--json", help="also write the report JSON here")
    p.add_argument("--report-dir", help="write CSV tables and figures into this directory")
    p.add_argument("--recall-points", type=int, default=None,
                   help="sample precision at N recall points (e.g. 101); default is exact area")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--objects", type=int, default=3)
    p.add_argument("--frames", type=int, default=36)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--sigma", type=float, default=0.0, help="embedding noise (expected norm)")
    p.add_argument("--jitter", type=float, default=0.0, help="box jitter as a fraction of frame size")
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=360)
    p.add_argument("--no-masks", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--video-id")
    p.add_argument("--det-out", required=True)
    p.add_argument("--gt-out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("match", help="per-frame Hungarian matching of detections to ground truth")
    p.add_argument("detections")
    p.add_argument("--gt", required=True)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=360)
    p.add_argument("--config")
    p.add_argument("-o", "--output")
    _add_weight_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("selfcheck", help="run the numerical self-check suites")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("QTRACK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"qtrack: error[{exc.code}]: {exc}", file=sys.stderr)
    except CLIError as exc:
        print(f"qtrack: error[{exc.code}]: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
