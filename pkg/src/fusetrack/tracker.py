"""Per-class online tracker over a scenario."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .affinity import backward_matching, dt_col, fn_col, forward_matching, fp_row, nb_row
from .association import LifecycleThresholds, Track, step
from .geometry import pairwise_bev_distance, select_best_camera
from .network import FeatureBundle, ResidualNet
from .refine import RefineParams, default_params, match_2d_3d
from .scene import Scenario
from .simgen import detection_rows, predicted_center, top_detections

# logit assigned to anchors the heuristic never wants to pick
_NEVER = -1e3


class LearnedAffinity:
    def __init__(self, net: ResidualNet):
        self.net = net

    @property
    def n_max(self) -> int:
        return self.net.config.n_max

    def logits(self, tracks: list, detections: list, dt: float) -> np.ndarray:
        cfg = self.net.config
        bundle = FeatureBundle.from_rows(
            cfg.n_max, detection_rows(tracks, dt), detection_rows(detections), cfg.f_shape, cfg.f_cue
        )
        return self.net.logits(bundle)


class HeuristicAffinity:
    """Distance-only baseline: pair logit is minus the BEV distance between
    the track's motion-predicted center and the detection center.

    Unmatched tracks fall to the FN anchor and unmatched detections to the
    NB anchor once every counterpart is farther than ``gate`` meters; the FP
    and DT anchors are never chosen.
    """

    def __init__(self, n_max: int = 16, gate: float = 4.0):
        self.n_max = n_max
        self.gate = gate

    def logits(self, tracks: list, detections: list, dt: float) -> np.ndarray:
        n = self.n_max
        out = np.full((n + 2, n + 2), _NEVER)
        if tracks and detections:
            d = pairwise_bev_distance([predicted_center(t.box, dt) for t in tracks], [x.box.center for x in detections])
            out[: len(tracks), : len(detections)] = -d
        out[:, fn_col(n)] = -self.gate
        out[nb_row(n), :] = -self.gate
        out[fp_row(n), :] = _NEVER
        out[:, dt_col(n)] = _NEVER
        return out


@dataclass
class TrackerOptions:
    thresholds: LifecycleThresholds = field(default_factory=LifecycleThresholds)
    refine: bool = True
    refine_params: Optional[RefineParams] = None
    max_misses: int = 3


def _caught_up(track: Track, dt: float) -> Track:
    """View of ``track`` with its box advanced over the frames it was missed
    without propagation, so affinities compare against where it should be."""
    if track.stale_steps == 0:
        return track
    shift = np.asarray(track.box.velocity, dtype=float) * dt * track.stale_steps
    return replace(track, box=track.box.translated(shift))


class Tracker:
    """Online tracker for a single object class."""

    def __init__(self, cls: str, affinity, rig, dt: float, options: Optional[TrackerOptions] = None):
        self.cls = cls
        self.affinity = affinity
        self.rig = rig
        self.dt = dt
        self.options = options or TrackerOptions()
        self.refine_params = self.options.refine_params or default_params(cls)
        self.tracks: list = []
        self.next_id = 0

    def update(self, dets3d: list, dets2d: list):
        n_max = self.affinity.n_max
        dets = top_detections([d for d in dets3d if d.cls == self.cls], n_max)
        # highest-confidence live tracks take the affinity rows; the rest wait
        order = sorted(range(len(self.tracks)), key=lambda k: (-self.tracks[k].confidence, self.tracks[k].id))
        rows = [self.tracks[k] for k in order[:n_max]]
        waiting = [self.tracks[k] for k in order[n_max:]]

        logits = self.affinity.logits([_caught_up(t, self.dt) for t in rows], dets, self.dt)
        fm = forward_matching(logits, len(rows), len(dets))
        bm = backward_matching(logits, len(dets), len(rows))

        fused = [None] * len(dets)
        if self.options.refine:
            proj = [select_best_camera(d.box, self.rig) for d in dets]
            fused = match_2d_3d(
                [d for d in dets2d if d.cls == self.cls],
                proj,
                self.refine_params.tau_iou,
                [d.cls for d in dets],
            )
        live, report, self.next_id = step(
            rows,
            dets,
            fm,
            bm,
            fused,
            self.next_id,
            self.dt,
            self.options.thresholds,
            self.refine_params,
            self.options.max_misses,
            self.options.refine,
        )
        for t in waiting:
            t.consecutive_misses += 1
            t.stale_steps += 1
            t.age += 1
            if t.consecutive_misses < self.options.max_misses:
                live.append(t)
            else:
                report.terminated_ids.append(t.id)
        self.tracks = live
        return report


@dataclass
class TrackRecord:
    frame: int
    track_id: int
    cls: str
    box: object
    confidence: float
    status: str


def run_scenario(
    scenario: Scenario,
    affinities: dict,
    options: Optional[TrackerOptions] = None,
    refine_params: Optional[dict] = None,
) -> list:
    """Track every class in ``affinities`` (class -> affinity model).

    ``refine_params`` optionally maps class to :class:`RefineParams`.
    Returns one list of :class:`TrackRecord` per frame. Track ids are made
    unique across classes by a per-class offset.
    """
    cfg = scenario.config
    options = options or TrackerOptions()
    frames_out = [[] for _ in scenario.frames]
    for k, cls in enumerate(sorted(affinities)):
        opts = options
        if refine_params and cls in refine_params:
            opts = replace(options, refine_params=refine_params[cls])
        tracker = Tracker(cls, affinities[cls], scenario.rig, cfg.frame_dt, opts)
        offset = k * 1_000_000
        for fr in scenario.frames:
            report = tracker.update(fr.dets3d, fr.dets2d)
            for t in report.reported:
                frames_out[fr.index].append(
                    TrackRecord(fr.index, offset + t.id, cls, t.box, float(t.confidence), t.status)
                )
    return frames_out
