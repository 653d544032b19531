"""Turning forward/backward affinities into track/detection dispositions,
and advancing the track table one frame."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .affinity import BackwardAffinity, ForwardAffinity, dt_col, fn_col, fp_row, nb_row
from .geometry import Box3D
from .refine import FusedEntry, RefineParams, refine
from .scene import Detection3D

ACTIVE = "active"
PROPAGATED = "propagated"
DEAD = "dead"


@dataclass(frozen=True)
class LifecycleThresholds:
    tau_fp: float = 0.7
    tau_fn: float = 0.5
    tau_nb: float = 0.5
    tau_dt: float = 0.5

    def __post_init__(self):
        for name in ("tau_fp", "tau_fn", "tau_nb", "tau_dt"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


@dataclass
class Track:
    id: int
    cls: str
    box: Box3D
    confidence: float
    age: int = 1
    status: str = ACTIVE
    consecutive_misses: int = 0
    # frames the box has not been advanced for (missed without propagation)
    stale_steps: int = 0
    # latest per-channel descriptors, fed back as previous-frame inputs
    features: dict = field(default_factory=dict)


@dataclass
class AssociationResult:
    matches: list
    matched: set
    newborn: set
    eliminated_fp: set
    fn_propagated: set
    terminated: set
    missed: set
    p_fp: np.ndarray


def _check_shapes(fm: np.ndarray, bm: np.ndarray, n_tracks: int, n_dets: int) -> int:
    n_max = fm.shape[0]
    if fm.shape != (n_max, n_max + 2) or bm.shape != (n_max + 2, n_max):
        raise ValueError(f"inconsistent affinity shapes {fm.shape} and {bm.shape}")
    if n_tracks > n_max or n_dets > n_max:
        raise ValueError("more tracks or detections than n_max")
    return n_max


def eligible_pairs(fm: np.ndarray, bm: np.ndarray, n_tracks: int, n_dets: int, th: LifecycleThresholds):
    """Candidate (track, detection) pairs before the greedy pass, plus p_fp
    and the eliminated detections."""
    n_max = _check_shapes(fm, bm, n_tracks, n_dets)
    p_fp = bm[fp_row(n_max), :n_dets].copy()
    eliminated = {j for j in range(n_dets) if p_fp[j] >= th.tau_fp}

    vetoed = set()
    rows = list(range(n_tracks)) + [fp_row(n_max), nb_row(n_max)]
    for j in range(n_dets):
        col = bm[rows, j]
        best = rows[int(np.argmax(col))]
        if best == fp_row(n_max) and bm[best, j] >= th.tau_fp:
            vetoed.add(j)
        elif best == nb_row(n_max) and bm[best, j] >= th.tau_nb:
            vetoed.add(j)

    pairs = []
    for i in range(n_tracks):
        anchor_best = max(fm[i, dt_col(n_max)], fm[i, fn_col(n_max)])
        for j in range(n_dets):
            if j in eliminated or j in vetoed:
                continue
            if fm[i, j] > anchor_best:
                pairs.append((i, j))
    return pairs, p_fp, eliminated


def associate(
    fm,
    bm,
    n_tracks: int,
    n_dets: int,
    th: Optional[LifecycleThresholds] = None,
) -> AssociationResult:
    """Greedy matching in descending forward probability.

    Order of decisions: FP elimination, anchor-vetoed greedy matching,
    FN propagation (checked before DT termination) for unmatched tracks,
    and every surviving unmatched detection becomes a newborn.
    """
    th = th or LifecycleThresholds()
    fm = fm.values if isinstance(fm, ForwardAffinity) else np.asarray(fm, dtype=float)
    bm = bm.values if isinstance(bm, BackwardAffinity) else np.asarray(bm, dtype=float)
    n_max = fm.shape[0]
    pairs, p_fp, eliminated = eligible_pairs(fm, bm, n_tracks, n_dets, th)
    pairs.sort(key=lambda p: (-fm[p], p[0], p[1]))

    used_t, used_d = set(), set()
    matches = []
    for i, j in pairs:
        if i in used_t or j in used_d:
            continue
        matches.append((i, j))
        used_t.add(i)
        used_d.add(j)

    fn_set, dead_set, missed = set(), set(), set()
    for i in range(n_tracks):
        if i in used_t:
            continue
        if fm[i, fn_col(n_max)] >= th.tau_fn:
            fn_set.add(i)
        elif fm[i, dt_col(n_max)] >= th.tau_dt:
            dead_set.add(i)
        else:
            missed.add(i)

    newborn = {j for j in range(n_dets) if j not in used_d and j not in eliminated}
    return AssociationResult(
        matches=matches,
        matched=used_d,
        newborn=newborn,
        eliminated_fp=eliminated,
        fn_propagated=fn_set,
        terminated=dead_set,
        missed=missed,
        p_fp=p_fp,
    )


def propagate_fn(track: Track, dt: float) -> Track:
    """Advance an unmatched track along its velocity estimate."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if track.status == DEAD:
        raise ValueError("cannot propagate a dead track")
    box = track.box.translated(track.box.velocity * dt)
    return replace(
        track,
        box=box,
        status=PROPAGATED,
        consecutive_misses=track.consecutive_misses + 1,
    )


@dataclass
class StepReport:
    """Per-frame outcome; track ids refer to the table before/after as noted."""

    matches: list  # (track id, detection index)
    newborn_ids: list
    eliminated: list  # detection indices
    fn_propagated_ids: list
    terminated_ids: list
    missed_ids: list
    reported: list  # tracks emitted for this frame


def step(
    tracks: Sequence[Track],
    detections: Sequence[Detection3D],
    fm,
    bm,
    fused: Sequence[Optional[FusedEntry]],
    next_id: int,
    dt: float,
    th: Optional[LifecycleThresholds] = None,
    refine_params: Optional[RefineParams] = None,
    max_misses: int = 3,
    use_refine: bool = True,
):
    """Apply one frame of decisions to the live tracks.

    ``tracks`` must be in the row order used to build ``fm``/``bm``.
    Returns ``(live_tracks, report, next_id)``; dead tracks are dropped from
    the returned table and listed in the report.
    """
    th = th or LifecycleThresholds()
    assoc = associate(fm, bm, len(tracks), len(detections), th)

    if use_refine:
        if refine_params is None:
            raise ValueError("refine_params required when refinement is on")
        new_conf = refine(
            assoc.matches,
            sorted(assoc.newborn),
            fused,
            refine_params,
            [d.confidence for d in detections],
            assoc.p_fp,
            {i: t.confidence for i, t in enumerate(tracks)},
        )
    else:
        new_conf = {j: detections[j].confidence for j in assoc.matched | assoc.newborn}

    out = []
    reported = []
    terminated_ids = []
    fn_ids, missed_ids = [], []
    for i, j in assoc.matches:
        det = detections[j]
        t = replace(
            tracks[i],
            box=det.box,
            confidence=float(new_conf[j]),
            age=tracks[i].age + 1,
            status=ACTIVE,
            consecutive_misses=0,
            stale_steps=0,
            features=det.features,
        )
        out.append(t)
        reported.append(t)
    for i, t in enumerate(tracks):
        if i in assoc.fn_propagated:
            t = propagate_fn(t, dt)
            t = replace(t, age=t.age + 1)
            if t.consecutive_misses >= max_misses:
                terminated_ids.append(t.id)
                continue
            fn_ids.append(t.id)
            out.append(t)
            reported.append(t)
        elif i in assoc.terminated:
            terminated_ids.append(t.id)
        elif i in assoc.missed:
            t = replace(t, age=t.age + 1, consecutive_misses=t.consecutive_misses + 1, stale_steps=t.stale_steps + 1)
            if t.consecutive_misses >= max_misses:
                terminated_ids.append(t.id)
                continue
            missed_ids.append(t.id)
            out.append(t)
    newborn_ids = []
    for j in sorted(assoc.newborn):
        det = detections[j]
        t = Track(next_id, det.cls, det.box, float(new_conf[j]), features=det.features)
        next_id += 1
        newborn_ids.append(t.id)
        out.append(t)
        reported.append(t)

    report = StepReport(
        matches=[(tracks[i].id, j) for i, j in assoc.matches],
        newborn_ids=newborn_ids,
        eliminated=sorted(assoc.eliminated_fp),
        fn_propagated_ids=fn_ids,
        terminated_ids=terminated_ids,
        missed_ids=missed_ids,
        reported=reported,
    )
    return out, report, next_id
