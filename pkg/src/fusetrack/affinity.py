"""Anchor-augmented affinity matrices, their matching softmaxes, and the
log affinity loss.

Index convention for an ``(n_max + 2) x (n_max + 2)`` logits matrix:

* rows ``0..n_max-1`` are previous-frame tracks, row ``n_max`` is the
  false-positive anchor, row ``n_max + 1`` the newborn anchor;
* columns ``0..n_max-1`` are current-frame detections, column ``n_max`` is
  the dead-track anchor, column ``n_max + 1`` the false-negative anchor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Box3D, center_distance_bev


def fp_row(n_max: int) -> int:
    return n_max


def nb_row(n_max: int) -> int:
    return n_max + 1


def dt_col(n_max: int) -> int:
    return n_max


def fn_col(n_max: int) -> int:
    return n_max + 1


@dataclass
class ForwardAffinity:
    """Row-stochastic track -> (detection | DT | FN) probabilities."""

    values: np.ndarray  # n_max x (n_max + 2)
    n_valid: int

    @property
    def n_max(self) -> int:
        return self.values.shape[0]


@dataclass
class BackwardAffinity:
    """Column-stochastic detection -> (track | FP | NB) probabilities."""

    values: np.ndarray  # (n_max + 2) x n_max
    n_valid: int

    @property
    def n_max(self) -> int:
        return self.values.shape[1]


@dataclass
class GtAffinityPair:
    fm: np.ndarray
    bm: np.ndarray


def _check_logits(logits: np.ndarray) -> int:
    logits = np.asarray(logits)
    if logits.ndim != 2 or logits.shape[0] != logits.shape[1] or logits.shape[0] < 2:
        raise ValueError(f"logits must be square with side n_max + 2, got {logits.shape}")
    return logits.shape[0] - 2


def _masked_log_softmax(x: np.ndarray, mask: np.ndarray, axis: int) -> np.ndarray:
    """log-softmax along ``axis`` restricted to ``mask``; masked-out cells get -inf."""
    x = np.where(mask, x, -np.inf)
    peak = x.max(axis=axis, keepdims=True)
    shifted = x - peak
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def forward_log_probs(logits: np.ndarray, valid_det_count: Optional[int] = None) -> np.ndarray:
    n_max = _check_logits(logits)
    x = np.asarray(logits, dtype=float)[:n_max, :]
    mask = np.ones_like(x, dtype=bool)
    if valid_det_count is not None:
        mask[:, valid_det_count:n_max] = False
    return _masked_log_softmax(x, mask, axis=1)


def backward_log_probs(logits: np.ndarray, valid_track_count: Optional[int] = None) -> np.ndarray:
    n_max = _check_logits(logits)
    x = np.asarray(logits, dtype=float)[:, :n_max]
    mask = np.ones_like(x, dtype=bool)
    if valid_track_count is not None:
        mask[valid_track_count:n_max, :] = False
    return _masked_log_softmax(x, mask, axis=0)


def forward_matching(
    logits: np.ndarray, valid_track_count: int, valid_det_count: Optional[int] = None
) -> ForwardAffinity:
    """Drop the FP/NB rows and softmax each remaining row.

    With ``valid_det_count`` given, padded detection columns are excluded
    from the softmax (probability exactly 0). Rows at or beyond
    ``valid_track_count`` are still computed; ``n_valid`` marks the cut.
    """
    n_max = _check_logits(logits)
    if not 0 <= valid_track_count <= n_max:
        raise ValueError(f"valid_track_count {valid_track_count} outside [0, {n_max}]")
    return ForwardAffinity(np.exp(forward_log_probs(logits, valid_det_count)), valid_track_count)


def backward_matching(
    logits: np.ndarray, valid_det_count: int, valid_track_count: Optional[int] = None
) -> BackwardAffinity:
    """Drop the DT/FN columns and softmax each remaining column."""
    n_max = _check_logits(logits)
    if not 0 <= valid_det_count <= n_max:
        raise ValueError(f"valid_det_count {valid_det_count} outside [0, {n_max}]")
    return BackwardAffinity(np.exp(backward_log_probs(logits, valid_track_count)), valid_det_count)


def _side_loss(gt: np.ndarray, log_p: np.ndarray) -> float:
    total = gt.sum()
    if total == 0:
        return 0.0
    hit = gt > 0
    return float(-(gt[hit] * log_p[hit]).sum() / total)


def log_affinity_loss_from_log_probs(
    log_fm: np.ndarray, log_bm: np.ndarray, gt: GtAffinityPair
) -> float:
    if log_fm.shape != gt.fm.shape or log_bm.shape != gt.bm.shape:
        raise ValueError("affinity and ground-truth shapes differ")
    if gt.fm.sum() == 0 and gt.bm.sum() == 0:
        raise ValueError("empty ground truth")
    return 0.5 * (_side_loss(gt.fm, log_fm) + _side_loss(gt.bm, log_bm))


def log_affinity_loss(fm, bm, gt: GtAffinityPair) -> float:
    """Mean of the forward and backward normalized negative log-likelihoods.

    A side whose ground truth is all zero contributes 0.
    """
    fm_vals = fm.values if isinstance(fm, ForwardAffinity) else np.asarray(fm, dtype=float)
    bm_vals = bm.values if isinstance(bm, BackwardAffinity) else np.asarray(bm, dtype=float)
    with np.errstate(divide="ignore"):
        return log_affinity_loss_from_log_probs(np.log(fm_vals), np.log(bm_vals), gt)


def log_affinity_loss_grad(
    logits: np.ndarray,
    gt: GtAffinityPair,
    valid_track_count: Optional[int] = None,
    valid_det_count: Optional[int] = None,
) -> tuple:
    """Loss and its gradient with respect to the raw logits."""
    n_max = _check_logits(logits)
    log_fm = forward_log_probs(logits, valid_det_count)
    log_bm = backward_log_probs(logits, valid_track_count)
    loss = log_affinity_loss_from_log_probs(log_fm, log_bm, gt)

    grad = np.zeros((n_max + 2, n_max + 2))
    s_fm = gt.fm.sum()
    if s_fm > 0:
        p = np.exp(log_fm)
        grad[:n_max, :] += 0.5 * (p * gt.fm.sum(axis=1, keepdims=True) - gt.fm) / s_fm
    s_bm = gt.bm.sum()
    if s_bm > 0:
        p = np.exp(log_bm)
        grad[:, :n_max] += 0.5 * (p * gt.bm.sum(axis=0, keepdims=True) - gt.bm) / s_bm
    return loss, grad


# ---------------------------------------------------------------------------
# ground truth construction
# ---------------------------------------------------------------------------


def label_detections(
    boxes: Sequence[Box3D],
    confidences: Sequence[float],
    gt_objects: Sequence[tuple],
    max_distance: float = 2.0,
) -> list:
    """Assign each detection a gt identity (or None) by greedy matching in
    descending confidence within ``max_distance`` meters in BEV.

    ``gt_objects`` is a sequence of ``(identity, Box3D)``.
    """
    ids = [gid for gid, _ in gt_objects]
    if len(set(ids)) != len(ids):
        raise ValueError("inconsistent ground truth")
    order = sorted(range(len(boxes)), key=lambda k: (-confidences[k], k))
    claimed = set()
    labels = [None] * len(boxes)
    for k in order:
        best, best_d = None, None
        for gid, gbox in gt_objects:
            if gid in claimed:
                continue
            d = center_distance_bev(boxes[k], gbox)
            if d <= max_distance and (best_d is None or d < best_d):
                best, best_d = gid, d
        if best is not None:
            claimed.add(best)
            labels[k] = best
    return labels


def gt_affinity_from_labels(
    prev_labels: Sequence,
    curr_labels: Sequence,
    prev_gt_ids,
    curr_gt_ids,
    n_max: int,
) -> GtAffinityPair:
    """0/1 forward/backward targets from per-detection identity labels."""
    if len(prev_labels) > n_max or len(curr_labels) > n_max:
        raise ValueError("more detections than n_max")
    prev_gt_ids = set(prev_gt_ids)
    curr_gt_ids = set(curr_gt_ids)
    fm = np.zeros((n_max, n_max + 2))
    bm = np.zeros((n_max + 2, n_max))
    curr_index = {lab: j for j, lab in enumerate(curr_labels) if lab is not None}
    prev_index = {lab: i for i, lab in enumerate(prev_labels) if lab is not None}

    for i, lab in enumerate(prev_labels):
        if lab is not None and lab in curr_index:
            fm[i, curr_index[lab]] = 1.0
        elif lab is not None and lab in curr_gt_ids:
            fm[i, fn_col(n_max)] = 1.0
        else:
            # object left the scene, or the track never had an object
            fm[i, dt_col(n_max)] = 1.0

    for j, lab in enumerate(curr_labels):
        if lab is None:
            bm[fp_row(n_max), j] = 1.0
        elif lab in prev_index:
            bm[prev_index[lab], j] = 1.0
        else:
            # new at t, or present at t-1 without a previous detection
            bm[nb_row(n_max), j] = 1.0
    return GtAffinityPair(fm, bm)


def build_gt_affinity(
    prev_boxes: Sequence[Box3D],
    prev_confidences: Sequence[float],
    curr_boxes: Sequence[Box3D],
    curr_confidences: Sequence[float],
    gt_prev: Sequence[tuple],
    gt_curr: Sequence[tuple],
    n_max: int,
    max_distance: float = 2.0,
) -> GtAffinityPair:
    """Training targets for one frame pair.

    Detections are labeled against ``gt_prev``/``gt_curr`` (sequences of
    ``(identity, Box3D)``) before the anchor rules are applied.
    """
    prev_labels = label_detections(prev_boxes, prev_confidences, gt_prev, max_distance)
    curr_labels = label_detections(curr_boxes, curr_confidences, gt_curr, max_distance)
    return gt_affinity_from_labels(
        prev_labels,
        curr_labels,
        [gid for gid, _ in gt_prev],
        [gid for gid, _ in gt_curr],
        n_max,
    )
