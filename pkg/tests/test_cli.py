import json

import pytest

from qtrack import selfcheck
from qtrack.cli import main
from qtrack.io import parse_gt_file, parse_track_file
from qtrack.losses import contrastive_focal_loss_grad


def simulate(tmp_path, *extra, name="s"):
    det, gt = tmp_path / f"{name}_det.json", tmp_path / f"{name}_gt.json"
    assert main(["simulate", "--det-out", str(det), "--gt-out", str(gt), *extra]) == 0
    return det, gt


def test_simulate_is_byte_identical(tmp_path):
    a = simulate(tmp_path, "--seed", "7", name="a")
    b = simulate(tmp_path, "--seed", "7", name="b")
    assert a[0].read_bytes() == b[0].read_bytes()
    assert a[1].read_bytes() == b[1].read_bytes()


def test_simulate_counts(tmp_path):
    det, _ = simulate(tmp_path, "--objects", "3", "--frames", "5")
    frames = json.loads(det.read_text())["frames"]
    assert sum(len(f["detections"]) for f in frames) == 15


def test_simulate_anchor_error(tmp_path, capsys):
    code = main(["simulate", "--objects", "300", "--dim", "8", "--det-out", str(tmp_path / "d"),
                 "--gt-out", str(tmp_path / "g")])
    assert code != 0
    assert "E_SCENARIO" in capsys.readouterr().err


def test_track_recovers_gt(tmp_path):
    det, gt = simulate(tmp_path, "--objects", "4", "--frames", "12", "--seed", "3")
    out = tmp_path / "t.json"
    assert main(["track", str(det), "-o", str(out)]) == 0
    tracks = parse_track_file(out.read_bytes()).tracks
    gts = parse_gt_file(gt.read_bytes()).tracks
    pred_paths = sorted(tuple(tuple(b.as_list()) for _, b, _ in t.records) for t in tracks)
    gt_paths = sorted(tuple(tuple(b.as_list()) for _, b, _ in t.records) for t in gts)
    assert pred_paths == gt_paths


def test_track_empty_file(tmp_path):
    det = tmp_path / "d.json"
    det.write_text(json.dumps({"format_version": 1, "video_id": "e", "embedding_dim": 4, "frames": []}))
    out = tmp_path / "t.json"
    assert main(["track", str(det), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["tracks"] == []


def test_track_malformed(tmp_path, capsys):
    det = tmp_path / "d.json"
    det.write_text("[1, 2")
    assert main(["track", str(det), "-o", str(tmp_path / "t.json")]) != 0
    assert "error[E_JSON]" in capsys.readouterr().err


def test_track_config_precedence(tmp_path):
    det, _ = simulate(tmp_path, "--objects", "3", "--frames", "4")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"top_k": 1, "tau_new": 0.2, "lambda_l1": 1.0}))
    out = tmp_path / "t.json"
    assert main(["track", str(det), "-o", str(out), "--config", str(cfg), "--topk", "2"]) == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["top_k"] == 2
    assert doc["config"]["tau_new"] == 0.2
    assert doc["match_weights"]["lambda_l1"] == 1.0
    # only the top-2 candidates per frame were tracked
    assert sum(len(t["records"]) for t in doc["tracks"]) == 8


def test_track_bad_config_value(tmp_path, capsys):
    det, _ = simulate(tmp_path, "--objects", "1", "--frames", "2")
    assert main(["track", str(det), "--topk", "0"]) != 0
    assert "E_CONFIG" in capsys.readouterr().err


def eval_json(capsys, *args):
    assert main(["eval", *args]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    return json.loads(first)


def test_eval_perfect_and_empty(tmp_path, capsys):
    _, gt = simulate(tmp_path, "--objects", "2", "--frames", "4")
    gt_doc = json.loads(gt.read_text())
    for t in gt_doc["tracks"]:
        t["score"] = 0.9
    pred = tmp_path / "p.json"
    pred.write_text(json.dumps(gt_doc))
    report = eval_json(capsys, "--pred", str(pred), "--gt", str(gt))
    assert report["AP"] == report["AP50"] == report["AP75"] == 1.0

    gt_doc["tracks"] = []
    pred.write_text(json.dumps(gt_doc))
    report = eval_json(capsys, "--pred", str(pred), "--gt", str(gt))
    assert report == {"AP": 0.0, "AP50": 0.0, "AP75": 0.0, "AR1": 0.0, "AR10": 0.0, "id_switches": 0}


def test_eval_half_coverage_with_report(tmp_path, capsys):
    gt = {"format_version": 1, "video_id": "v", "tracks": [
        {"identity": 1, "class_id": 0, "records": [{"frame_index": 0, "box": [0, 0, 10, 10]}]},
        {"identity": 2, "class_id": 0, "records": [{"frame_index": 0, "box": [50, 50, 60, 60]}]}]}
    pred = {"format_version": 1, "video_id": "v", "tracks": [
        {"identity": 9, "class_id": 0, "score": 0.8, "records": [{"frame_index": 0, "box": [0, 0, 10, 10]}]}]}
    (tmp_path / "gt.json").write_text(json.dumps(gt))
    (tmp_path / "pred.json").write_text(json.dumps(pred))
    rep = tmp_path / "rep"
    report = eval_json(capsys, "--pred", str(tmp_path / "pred.json"), "--gt", str(tmp_path / "gt.json"),
                       "--report-dir", str(rep), "--json", str(tmp_path / "r.json"))
    assert report["AP"] == pytest.approx(0.5, abs=1e-6)
    assert json.loads((tmp_path / "r.json").read_text()) == report
    for name in ("report.json", "ap_by_threshold.csv", "ap_by_class.csv", "ap_by_threshold.png", "pr_curves.png"):
        assert (rep / name).stat().st_size > 0
    lines = (rep / "ap_by_threshold.csv").read_text().splitlines()
    assert lines[0] == "iou_threshold,AP" and len(lines) == 11
    assert (rep / "pr_curves.png").read_bytes()[:4] == b"\x89PNG"


def test_match_command(tmp_path):
    det, gt = simulate(tmp_path, "--objects", "3", "--frames", "3", "--seed", "5")
    out = tmp_path / "m.json"
    assert main(["match", str(det), "--gt", str(gt), "-o", str(out), "--lambda-cls", "1.0"]) == 0
    doc = json.loads(out.read_text())
    dets = json.loads(det.read_text())["frames"]
    gts = parse_gt_file(gt.read_bytes()).tracks
    for frame, dframe in zip(doc["frames"], dets):
        assert len(frame["pairs"]) == 3
        for pair in frame["pairs"]:
            box = dframe["detections"][pair["detection"]]["box"]
            gt_track = next(t for t in gts if t.identity == pair["identity"])
            assert gt_track.records[frame["frame_index"]][1].as_list() == box


def test_selfcheck_passes(capsys):
    assert main(["selfcheck"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4
    grad_line = next(line for line in out.splitlines() if "gradient" in line)
    assert float(grad_line.split("max_error=")[1].split()[0]) < 1e-5


def test_selfcheck_detects_gradient_sign_flip():
    def flipped(pair, fp):
        loss, grad = contrastive_focal_loss_grad(pair, fp)
        return loss, -grad

    results = {r.name: r for r in selfcheck.run_all(grad_fn=flipped)}
    assert not results["gradient_finite_difference"].passed
    assert results["hungarian_vs_brute_force"].passed


def test_log_env_var(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QTRACK_LOG", "info")
    simulate(tmp_path, "--objects", "1", "--frames", "2")
