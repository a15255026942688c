import math

import numpy as np
import pytest

from qtrack.simgen import ScenarioConfig, generate_scenario
from qtrack.tracker import (AssocConfig, Track, associate_frame, matching_factor_matrix,
                            select_candidates, track_video)


def test_select_candidates(make_det):
    dets = [make_det(score=s) for s in (0.9, 0.1, 0.5)]
    assert select_candidates(dets, 10) == [dets[0], dets[2], dets[1]]
    assert select_candidates(dets, 2) == [dets[0], dets[2]]
    ties = [make_det(score=0.5, emb=(k, 0)) for k in range(4)]
    assert select_candidates(ties, 3) == ties[:3]


def _track(identity, d, frame=0):
    return Track(identity, d.class_id, d.embedding.copy(), d.box, frame, [(frame, d)])


def test_matching_factor_examples(make_det):
    a = make_det(cls=0)
    b = make_det(cls=1)
    assert np.array_equal(matching_factor_matrix([a], [_track(1, b)]), [[0.0]])

    t = make_det(box=(0, 0, 10, 10), score=1.0, emb=(0.3, 2.0))
    c = make_det(box=(0, 0, 10, 10), score=1.0, emb=(-5.0, 1.0))
    assert matching_factor_matrix([c], [_track(1, t)]) == pytest.approx(np.array([[1.0]]))

    # dots (ln3, 0), IoU (1, 0), score 0.5
    cand = make_det(box=(0, 0, 10, 10), score=0.5, emb=(1.0, 0.0))
    t1 = make_det(box=(0, 0, 10, 10), emb=(math.log(3), 0.0))
    t2 = make_det(box=(50, 50, 60, 60), emb=(0.0, 1.0))
    F = matching_factor_matrix([cand], [_track(1, t1), _track(2, t2)])
    assert F == pytest.approx(np.array([[0.65625, 0.234375]]))


def test_matching_factor_bounds_random(make_det):
    rng = np.random.default_rng(0)
    for _ in range(200):
        m, n = rng.integers(1, 6, size=2)
        boxes = lambda: tuple(np.concatenate([xy := rng.uniform(0, 50, 2), xy + rng.uniform(1, 30, 2)]))
        cands = [make_det(boxes(), int(rng.integers(0, 3)), float(rng.uniform()), rng.normal(size=4) * 5)
                 for _ in range(m)]
        tracks = [_track(k + 1, make_det(boxes(), int(rng.integers(0, 3)), 1.0, rng.normal(size=4) * 5))
                  for k in range(n)]
        F = matching_factor_matrix(cands, tracks)
        assert ((F >= 0) & (F <= 1)).all()
        for i, c in enumerate(cands):
            for j, t in enumerate(tracks):
                if c.class_id != t.class_id:
                    assert F[i, j] == 0.0


def test_matching_factor_dim_mismatch(make_det):
    with pytest.raises(ValueError):
        matching_factor_matrix([make_det(emb=(1, 0, 0))], [_track(1, make_det(emb=(1, 0)))])


def test_cold_start_assigns_in_score_order(make_det):
    dets = [make_det(score=0.2), make_det(score=0.9), make_det(score=0.5)]
    state, out = associate_frame([], 0, dets)
    assert [(d.score, i) for d, i in out] == [(0.9, 1), (0.5, 2), (0.2, 3)]
    assert len(state) == 3


def test_saturated_match_inherits_identity(make_det):
    state, _ = associate_frame([], 0, [make_det(score=1.0)])
    state, out = associate_frame(state, 1, [make_det(score=1.0)])
    assert out[0][1] == 1
    assert len(state) == 1 and len(state[0].records) == 2


def test_class_change_spawns_identity(make_det):
    state, _ = associate_frame([], 0, [make_det(cls=0)])
    state, out = associate_frame(state, 1, [make_det(cls=1)])
    assert out[0][1] == 2


def test_out_of_order_frame_rejected(make_det):
    state, _ = associate_frame([], 5, [make_det()])
    with pytest.raises(ValueError):
        associate_frame(state, 5, [make_det()])
    with pytest.raises(ValueError):
        track_video([(3, []), (2, [])])


def test_each_track_claimed_once(make_det):
    state, _ = associate_frame([], 0, [make_det()])
    # two identical candidates compete for one track
    state, out = associate_frame(state, 1, [make_det(score=0.8), make_det(score=0.7)])
    ids = [i for _, i in out]
    assert ids == [1, 2]


def test_tie_broken_by_lowest_identity(make_det):
    state, _ = associate_frame([], 0, [make_det(emb=(1, 0)), make_det(emb=(1, 0))])
    state, out = associate_frame(state, 1, [make_det(emb=(1, 0))])
    assert out[0][1] == 1


def test_memory_momentum(make_det):
    cfg = AssocConfig(memory_momentum=0.25)
    state, _ = associate_frame([], 0, [make_det(emb=(1.0, 0.0))], cfg)
    state, _ = associate_frame(state, 1, [make_det(emb=(0.0, 1.0))], cfg)
    assert state[0].memory_embedding == pytest.approx([0.25, 0.75])
    state, _ = associate_frame([], 0, [make_det(emb=(1.0, 0.0))])
    state, _ = associate_frame(state, 1, [make_det(box=(1, 1, 11, 11), emb=(0.5, 0.5))])
    assert state[0].memory_embedding == pytest.approx([0.5, 0.5])
    assert state[0].memory_box.as_list() == [1, 1, 11, 11]


def test_keep_alive_retires_tracks(make_det):
    cfg = AssocConfig(keep_alive_frames=2)
    state, _ = associate_frame([], 0, [make_det()], cfg)
    state, out = associate_frame(state, 2, [make_det()], cfg)
    assert out[0][1] == 1
    state, out = associate_frame(state, 5, [make_det()], cfg)
    assert out[0][1] == 2
    # retired identities are never reused
    state, out = associate_frame(state, 6, [make_det(cls=3)], cfg)
    assert out[0][1] == 3


def test_top_k_limits_candidates(make_det):
    dets = [make_det(score=s / 20) for s in range(15)]
    _, out = associate_frame([], 0, dets, AssocConfig(top_k=10))
    assert len(out) == 10
    assert min(d.score for d, _ in out) == pytest.approx(5 / 20)


def test_emit_threshold(make_det):
    frames = [(0, [make_det(score=0.9, cls=0), make_det(score=0.2, cls=1)])]
    assert len(track_video(frames, AssocConfig(emit_score_threshold=0.5))) == 1


def test_track_video_trivial(make_det):
    assert track_video([]) == []
    tracks = track_video([(0, [make_det(cls=k) for k in range(4)])])
    assert len(tracks) == 4 and all(len(t.records) == 1 for t in tracks)


def _recovers(tracks, scenario):
    """Every predicted track maps to exactly one gt object and vice versa."""
    anchors = {}
    for (f, dets) in scenario.frames:
        for d in dets:
            anchors.setdefault(tuple(np.round(d.embedding, 12)), len(anchors))
    owners = [{anchors[tuple(np.round(d.embedding, 12))] for _, d in t.records} for t in tracks]
    return all(len(o) == 1 for o in owners) and len(tracks) == scenario.config.num_objects


@pytest.mark.parametrize("mode", ["greedy", "hungarian"])
def test_two_object_scenario_exact(mode):
    s = generate_scenario(ScenarioConfig(num_objects=2, num_frames=10, with_masks=False), seed=3)
    tracks = track_video(s.frames, AssocConfig(assign_mode=mode))
    assert len(tracks) == 2
    assert all(len(t.records) == 10 for t in tracks)
    assert _recovers(tracks, s)


def _assignments(tracks):
    return sorted((f, t.identity, tuple(d.box.as_list())) for t in tracks for f, d in t.records)


def test_determinism_and_prefix_stability():
    s = generate_scenario(ScenarioConfig(num_objects=6, num_frames=20, embedding_noise_sigma=0.1,
                                         box_jitter=0.02, false_positive_rate=0.1, with_masks=False), seed=9)
    full = _assignments(track_video(s.frames))
    assert full == _assignments(track_video(s.frames))
    for t in (1, 7, 15):
        prefix = _assignments(track_video(s.frames[:t]))
        assert prefix == [a for a in full if a[0] < t]


def test_normalize_embeddings_flag(make_det):
    a = make_det(emb=(10.0, 0.0))
    t = _track(1, make_det(emb=(0.0, 3.0)))
    F_raw = matching_factor_matrix([a, make_det(emb=(0.0, 1.0))], [t])
    F_norm = matching_factor_matrix([a, make_det(emb=(0.0, 1.0))], [t], normalize_embeddings=True)
    assert not np.allclose(F_raw, F_norm)


def test_config_validation():
    with pytest.raises(ValueError):
        AssocConfig(top_k=0)
    with pytest.raises(ValueError):
        AssocConfig(tau_new=-0.1)
    with pytest.raises(ValueError):
        AssocConfig(assign_mode="nearest")
