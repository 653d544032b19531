import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusetrack.fileio import report_text
from fusetrack.metrics import (
    EvalConfig,
    GtBox,
    PredBox,
    amota_amotp,
    evaluate_scenario,
    match_frame,
    motar,
)
from fusetrack.simgen import generate, preset
from fusetrack.tracker import TrackRecord

from oracles import best_assignment_size

FIXTURES = Path(__file__).parent / "fixtures"


def _load_fixture():
    doc = json.loads((FIXTURES / "metrics_fixture.json").read_text())
    scenes = []
    for sc in doc["scenes"]:
        gts = [[GtBox(g["id"], g["cls"], g["x"], g["y"]) for g in frame] for frame in sc["gt"]]
        preds = [[PredBox(p["track"], p["cls"], p["x"], p["y"], p["conf"]) for p in frame] for frame in sc["pred"]]
        scenes.append((gts, preds))
    return scenes, EvalConfig(n_recall=doc["n_recall"], tp_distance=doc["tp_distance"])


def test_hand_computed_fixture_report_bytes():
    scenes, cfg = _load_fixture()
    report = amota_amotp(scenes, cfg)
    assert report.amota == pytest.approx(3 / 14, abs=1e-15)
    assert report.amotp == 0.3125
    assert report_text(report) == (FIXTURES / "metrics_expected_report.json").read_text()


# -- per-frame matching ---------------------------------------------------------


def test_match_frame_examples():
    gts = [GtBox(1, "car", 0.0, 0.0), GtBox(2, "car", 5.0, 0.0)]
    m, fp, fn = match_frame([PredBox(7, "car", 0.0, 0.0, 0.5), PredBox(8, "car", 5.0, 0.0, 0.4)], gts)
    assert [(k, g) for k, g, _ in m] == [(0, 0), (1, 1)] and all(d == 0 for *_, d in m)
    assert fp == [] and fn == []
    m, fp, fn = match_frame([PredBox(7, "car", 3.0, 0.0, 0.5)], gts[:1])
    assert m == [] and fp == [0] and fn == [0]
    # contention: the more confident prediction claims the object
    m, fp, _ = match_frame([PredBox(1, "car", 0.5, 0, 0.3), PredBox(2, "car", 1.0, 0, 0.8)], gts[:1])
    assert [(k, g) for k, g, _ in m] == [(1, 0)] and fp == [0]


def test_distance_boundary_is_inclusive():
    m, _, _ = match_frame([PredBox(1, "car", 2.0, 0.0, 0.5)], [GtBox(1, "car", 0.0, 0.0)])
    assert len(m) == 1


def test_greedy_matching_against_brute_force():
    rng = np.random.default_rng(0)
    worse = 0
    for _ in range(300):
        n_p, n_g = int(rng.integers(0, 5)), int(rng.integers(0, 5))
        preds = [PredBox(k, "car", *rng.uniform(0, 4, 2), float(rng.random())) for k in range(n_p)]
        gts = [GtBox(k, "car", *rng.uniform(0, 4, 2)) for k in range(n_g)]
        m, fp, fn = match_frame(preds, gts)
        best = best_assignment_size([(p.x, p.y) for p in preds], [(g.x, g.y) for g in gts], 2.0)
        assert len(m) <= best
        assert len(m) + len(fp) == n_p and len(m) + len(fn) == n_g
        worse += len(m) < best
        # every match is within range and one-to-one
        assert all(d <= 2.0 for *_, d in m) and len({g for _, g, _ in m}) == len(m)
    # greedy is close to optimal on these small frames
    assert worse < 30


# -- MOTAR -------------------------------------------------------------------------


def test_motar_examples():
    assert motar(0, 0, 0, 1.0, 10) == 1.0
    assert motar(1, 2, 2, 0.5, 10) == 1.0
    assert motar(2, 3, 3, 0.5, 10) == pytest.approx(0.4, abs=1e-15)
    assert motar(50, 0, 0, 0.5, 10) == 0.0
    with pytest.raises(ValueError):
        motar(0, 0, 0, 0.0, 10)


def test_eval_config_validation():
    with pytest.raises(ValueError):
        EvalConfig(n_recall=1)
    with pytest.raises(ValueError):
        EvalConfig(tp_distance=0.0)


# -- whole-sweep properties --------------------------------------------------------


def _perfect(scn):
    return [[TrackRecord(fr.index, o.identity, o.cls, o.box, 1.0, "active") for o in fr.gt] for fr in scn.frames]


@pytest.mark.parametrize("name,seed", [("clean", 1), ("moderate", 2), ("fp_heavy", 3)])
def test_perfect_and_empty_trackers(name, seed):
    scn = generate(preset(name, seed=seed, n_frames=10, counts={"car": 5, "pedestrian": 3}))
    perfect = evaluate_scenario(scn, _perfect(scn))
    assert perfect.amota == 1.0 and perfect.amotp == 0.0
    empty = evaluate_scenario(scn, [[] for _ in scn.frames])
    assert empty.amota == 0.0 and empty.amotp == 2.0


def test_class_without_ground_truth_is_skipped():
    gts = [[GtBox(1, "car", 0, 0)]]
    preds = [[PredBox(1, "car", 0, 0, 0.9), PredBox(2, "bus", 9, 9, 0.9)]]
    report = amota_amotp([(gts, preds)], EvalConfig(n_recall=3))
    assert report.skipped == ["bus"] and list(report.per_class) == ["car"]
    assert report.amota == 1.0


def test_frame_count_mismatch():
    with pytest.raises(ValueError):
        amota_amotp([([[GtBox(1, "car", 0, 0)]], [])])


def _noisy_tracker(scn, rng):
    frames = []
    for fr in scn.frames:
        recs = []
        for o in fr.gt:
            if rng.random() < 0.2:
                continue
            box = o.box.translated(rng.normal(0, 0.6, 2))
            tid = o.identity + (100 if rng.random() < 0.05 else 0)
            recs.append(TrackRecord(fr.index, tid, o.cls, box, float(rng.random()), "active"))
        frames.append(recs)
    return frames


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_injected_fps_never_raise_amota(seed):
    rng = np.random.default_rng(seed)
    scn = generate(preset("clean", seed=seed % 1000, n_frames=8))
    frames = _noisy_tracker(scn, rng)
    base = evaluate_scenario(scn, frames).amota
    t = int(rng.integers(len(frames)))
    injected = [list(f) for f in frames]
    far = TrackRecord(t, 999, "car", scn.frames[0].gt[0].box.translated((500.0, 500.0)), 1.0, "active")
    injected[t].append(far)
    assert evaluate_scenario(scn, injected).amota <= base


def test_id_relabel_at_frame_boundary_increases_ids():
    scn = generate(preset("noise_free", seed=4, n_frames=10))
    frames = _perfect(scn)
    base = evaluate_scenario(scn, frames).per_class["car"]
    relabeled = [
        [TrackRecord(r.frame, r.track_id + (1000 if r.frame >= 5 else 0), r.cls, r.box, r.confidence, r.status) for r in f]
        for f in frames
    ]
    new = evaluate_scenario(scn, relabeled).per_class["car"]
    for a, b in zip(base.rows, new.rows):
        assert b.ids > a.ids
    assert new.amota < base.amota


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_metrics_invariant_to_monotone_confidence_rescaling(seed):
    rng = np.random.default_rng(seed)
    scn = generate(preset("moderate", seed=seed % 1000, n_frames=8))
    frames = _noisy_tracker(scn, rng)
    squashed = [
        [TrackRecord(r.frame, r.track_id, r.cls, r.box, math.sqrt(r.confidence) * 0.5, r.status) for r in f]
        for f in frames
    ]
    a, b = evaluate_scenario(scn, frames), evaluate_scenario(scn, squashed)
    assert a.amotp == b.amotp and a.amota == b.amota
