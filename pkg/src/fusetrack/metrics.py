"""AMOTA / AMOTP evaluation over a recall sweep.

Predictions are thresholded by confidence; at each target recall ``r`` the
highest threshold reaching recall ``>= r`` is used, and MOTAR plus the mean
true-positive distance are computed there.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class GtBox(NamedTuple):
    identity: int
    cls: str
    x: float
    y: float


class PredBox(NamedTuple):
    track_id: int
    cls: str
    x: float
    y: float
    confidence: float


@dataclass
class EvalConfig:
    n_recall: int = 40
    tp_distance: float = 2.0
    classes: Optional[list] = None

    def __post_init__(self):
        if self.n_recall < 2:
            raise ValueError("n_recall must be at least 2")
        if self.tp_distance <= 0:
            raise ValueError("tp_distance must be positive")


@dataclass
class RecallRow:
    recall_target: float
    reachable: bool
    threshold: Optional[float] = None
    recall: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    ids: int = 0
    motar: float = 0.0
    motp: Optional[float] = None


@dataclass
class ClassMetrics:
    amota: float
    amotp: float
    gt: int
    rows: list


@dataclass
class MetricsReport:
    amota: float
    amotp: float
    per_class: dict
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "amota": self.amota,
            "amotp": self.amotp,
            "skipped_classes": list(self.skipped),
            "classes": {
                cls: {
                    "amota": m.amota,
                    "amotp": m.amotp,
                    "gt": m.gt,
                    "recalls": [vars(r).copy() for r in m.rows],
                }
                for cls, m in self.per_class.items()
            },
        }


def match_frame(preds: Sequence[PredBox], gts: Sequence[GtBox], tp_distance: float = 2.0):
    """Greedy confidence-ordered matching of one frame (single class).

    Each prediction, in descending confidence, claims the nearest unclaimed
    ground truth within ``tp_distance``. Returns ``(matches, fp, fn)`` where
    ``matches`` holds ``(pred_index, gt_index, distance)``.
    """
    order = sorted(range(len(preds)), key=lambda k: (-preds[k].confidence, k))
    claimed = set()
    matches, fp = [], []
    for k in order:
        p = preds[k]
        best, best_d = None, None
        for g, gt in enumerate(gts):
            if g in claimed:
                continue
            d = math.hypot(p.x - gt.x, p.y - gt.y)
            if d <= tp_distance and (best_d is None or d < best_d):
                best, best_d = g, d
        if best is None:
            fp.append(k)
        else:
            claimed.add(best)
            matches.append((k, best, best_d))
    fn = [g for g in range(len(gts)) if g not in claimed]
    return matches, fp, fn


def motar(ids: int, fp: int, fn: int, recall: float, gt: int) -> float:
    """Recall-normalized MOTA, clipped to [0, 1]."""
    if recall * gt == 0:
        raise ValueError("recall * GT must be positive")
    value = 1.0 - (ids + fp + fn - (1.0 - recall) * gt) / (recall * gt)
    return min(1.0, max(0.0, value))


def _count_ids(assignments: list) -> int:
    """Identity switches; ``assignments`` holds per-scene lists of per-frame
    ``{gt_id: track_id}`` dicts."""
    switches = 0
    for frames in assignments:
        last = {}
        for frame in frames:
            for gid, tid in frame.items():
                if gid in last and last[gid] != tid:
                    switches += 1
                last[gid] = tid
    return switches


def evaluate_class(scenes: Sequence[tuple], cls: str, cfg: EvalConfig) -> Optional[ClassMetrics]:
    """``scenes`` holds ``(gt_frames, pred_frames)``; each is a per-frame list
    of :class:`GtBox` / :class:`PredBox`."""
    conf, matched, dist, keys = [], [], [], []
    n_gt = 0
    for s, (gt_frames, pred_frames) in enumerate(scenes):
        if len(gt_frames) != len(pred_frames):
            raise ValueError("ground truth and predictions cover different frame counts")
        for t, (gts, preds) in enumerate(zip(gt_frames, pred_frames)):
            gts = [g for g in gts if g.cls == cls]
            preds = [p for p in preds if p.cls == cls]
            n_gt += len(gts)
            m, _, _ = match_frame(preds, gts, cfg.tp_distance)
            hit = {k: (g, d) for k, g, d in m}
            for k, p in enumerate(preds):
                conf.append(p.confidence)
                if k in hit:
                    g, d = hit[k]
                    matched.append(True)
                    dist.append(d)
                    keys.append((s, t, gts[g].identity, p.track_id))
                else:
                    matched.append(False)
                    dist.append(0.0)
                    keys.append((s, t, None, p.track_id))
    if n_gt == 0:
        return None
    conf = np.asarray(conf, dtype=float)
    matched = np.asarray(matched, dtype=bool)
    dist = np.asarray(dist, dtype=float)
    thresholds = np.unique(conf)[::-1]
    tp_at = np.array([(matched & (conf >= c)).sum() for c in thresholds], dtype=int)

    rows = []
    n = cfg.n_recall
    for k in range(1, n):
        r = k / (n - 1)
        reach = np.nonzero(tp_at >= r * n_gt - 1e-9)[0]
        if len(reach) == 0:
            rows.append(RecallRow(r, False))
            continue
        c = float(thresholds[reach[0]])
        keep = conf >= c
        tp = int((matched & keep).sum())
        fp = int((~matched & keep).sum())
        fn = n_gt - tp
        assignments = [[{} for _ in range(len(sc[0]))] for sc in scenes]
        for idx in np.nonzero(matched & keep)[0]:
            s, t, gid, tid = keys[idx]
            assignments[s][t][gid] = tid
        ids = _count_ids(assignments)
        rows.append(
            RecallRow(
                r,
                True,
                threshold=c,
                recall=tp / n_gt,
                tp=tp,
                fp=fp,
                fn=fn,
                ids=ids,
                motar=motar(ids, fp, fn, r, n_gt),
                motp=float(dist[matched & keep].sum() / tp),
            )
        )
    amota = sum(row.motar for row in rows) / (n - 1)
    motps = [row.motp for row in rows if row.reachable]
    amotp = float(np.mean(motps)) if motps else cfg.tp_distance
    return ClassMetrics(float(amota), amotp, n_gt, rows)


def amota_amotp(scenes: Sequence[tuple], cfg: Optional[EvalConfig] = None) -> MetricsReport:
    cfg = cfg or EvalConfig()
    classes = cfg.classes
    if classes is None:
        found = set()
        for gt_frames, pred_frames in scenes:
            for frame in list(gt_frames) + list(pred_frames):
                found.update(b.cls for b in frame)
        classes = sorted(found)
    per_class, skipped = {}, []
    for cls in classes:
        m = evaluate_class(scenes, cls, cfg)
        if m is None:
            logger.warning("class %s has no ground truth; skipped", cls)
            skipped.append(cls)
            continue
        per_class[cls] = m
    if per_class:
        amota = float(np.mean([m.amota for m in per_class.values()]))
        amotp = float(np.mean([m.amotp for m in per_class.values()]))
    else:
        amota, amotp = 0.0, cfg.tp_distance
    return MetricsReport(amota, amotp, per_class, skipped)


# ---------------------------------------------------------------------------
# adapters
# ---------------------------------------------------------------------------


def gt_frames_from_scenario(scenario) -> list:
    return [
        [GtBox(o.identity, o.cls, float(o.box.center[0]), float(o.box.center[1])) for o in fr.gt]
        for fr in scenario.frames
    ]


def pred_frames_from_records(frames: Sequence[Sequence]) -> list:
    return [
        [PredBox(r.track_id, r.cls, float(r.box.center[0]), float(r.box.center[1]), r.confidence) for r in recs]
        for recs in frames
    ]


def evaluate_scenario(scenario, track_frames, cfg: Optional[EvalConfig] = None) -> MetricsReport:
    return amota_amotp([(gt_frames_from_scenario(scenario), pred_frames_from_records(track_frames))], cfg)
