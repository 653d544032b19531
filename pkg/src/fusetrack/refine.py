"""Multimodal sequential track confidence refinement.

3D detections projected into the image are matched to 2D detections by
IoU; corroborated detections get boosted confidence, weight and
true-positive probability before the sequential track-confidence update.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .config import DEFAULTS
from .geometry import Box2D, iou_2d

# per-class IoU threshold for 2D/3D corroboration
TAU_IOU = dict(DEFAULTS["refine"]["tau_iou"])
BETA1 = DEFAULTS["refine"]["beta1"]
BETA2_DEFAULT = DEFAULTS["refine"]["beta2"]
BETA2_OVERRIDES = dict(DEFAULTS["refine"]["beta2_overrides"])


@dataclass(frozen=True)
class RefineParams:
    tau_iou: float
    beta1: float = BETA1
    beta2: float = BETA2_DEFAULT

    def __post_init__(self):
        for name in ("tau_iou", "beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")


def default_params(cls: str) -> RefineParams:
    if cls not in TAU_IOU:
        raise KeyError(f"unknown class {cls!r}")
    return RefineParams(TAU_IOU[cls], BETA1, BETA2_OVERRIDES.get(cls, BETA2_DEFAULT))


@dataclass(frozen=True)
class Detection2D:
    box: Box2D
    camera_index: int
    confidence: float
    cls: str = ""

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class FusedEntry:
    iou: float
    confidence_2d: float
    det2d_index: int


def f_hat(x: float, iou: float, tau_iou: float) -> float:
    if tau_iou == 0:
        raise ValueError("tau_iou must be positive")
    return min((iou / tau_iou) * x, 1.0)


def match_2d_3d(
    dets2d: Sequence[Detection2D],
    proj3d: Sequence[Optional[tuple]],
    tau_iou: float,
    classes3d: Optional[Sequence[str]] = None,
) -> list:
    """Greedy one-to-one 2D/3D matching inside each camera.

    ``proj3d[i]`` is ``(camera_index, Box2D)`` or None for a 3D detection
    seen by no camera. Pairs need IoU strictly above ``tau_iou`` and, when
    ``classes3d`` is given, equal class labels. Returns one
    :class:`FusedEntry` or None per 3D detection.
    """
    pairs = []
    for i, proj in enumerate(proj3d):
        if proj is None:
            continue
        cam, box3 = proj
        for k, d in enumerate(dets2d):
            if d.camera_index != cam:
                continue
            if classes3d is not None and d.cls != classes3d[i]:
                continue
            iou = iou_2d(box3, d.box)
            if iou > tau_iou:
                pairs.append((iou, i, k))
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    fused: list = [None] * len(proj3d)
    used_2d = set()
    for iou, i, k in pairs:
        if fused[i] is not None or k in used_2d:
            continue
        fused[i] = FusedEntry(iou, dets2d[k].confidence, k)
        used_2d.add(k)
    return fused


def _refined_terms(c3d, p_fp, entry: Optional[FusedEntry], params: RefineParams):
    c_det, beta2_i = c3d, params.beta2
    if entry is not None and entry.iou > params.tau_iou:
        c_det = f_hat(max(c3d, entry.confidence_2d), entry.iou, params.tau_iou)
        beta2_i = f_hat(params.beta2, entry.iou, params.tau_iou)
        p_fp = 1.0 - f_hat(1.0 - p_fp, entry.iou, params.tau_iou)
    gate = 1.0 if p_fp < params.beta1 else 0.0
    return gate, beta2_i, c_det


def refine(
    matches: Sequence[tuple],
    newborns: Sequence[int],
    fused: Sequence[Optional[FusedEntry]],
    params: RefineParams,
    det_confidences: Sequence[float],
    p_fp: Sequence[float],
    prev_confidences: Mapping[int, float],
) -> dict:
    """Updated track confidence keyed by 3D detection index.

    ``matches`` holds ``(track_index, detection_index)`` pairs and
    ``prev_confidences`` maps track index to its previous confidence.
    Detections without a corroborating 2D box keep their raw confidence
    and FP probability.
    """
    out = {}
    for t, i in matches:
        if t not in prev_confidences:
            raise KeyError(f"no previous confidence for matched track {t}")
        gate, beta2_i, c_det = _refined_terms(det_confidences[i], p_fp[i], fused[i], params)
        out[i] = gate * beta2_i * c_det + (1.0 - beta2_i) * prev_confidences[t]
    for i in newborns:
        gate, beta2_i, c_det = _refined_terms(det_confidences[i], p_fp[i], fused[i], params)
        out[i] = gate * beta2_i * c_det
    return out
