"""Seeded synthetic scenes: ground-truth trajectories, corrupted 3D and 2D
detections, a surround camera rig, and identity-correlated features that
stand in for pretrained backbone descriptors."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, asdict, replace
from typing import Optional

import numpy as np

from .affinity import GtAffinityPair, build_gt_affinity
from .geometry import Box2D, Box3D, select_best_camera, surround_rig
from .network import FeatureBundle
from .refine import Detection2D
from .scene import Detection3D, Frame, GtObject, Scenario

# size (l, w, h) in meters and speed range in m/s
CLASS_SPECS = {
    "car": ((4.6, 1.9, 1.7), (2.0, 8.0)),
    "truck": ((7.0, 2.5, 3.0), (2.0, 7.0)),
    "bus": ((11.0, 2.9, 3.5), (2.0, 6.0)),
    "trailer": ((10.0, 2.5, 3.6), (0.0, 4.0)),
    "pedestrian": ((0.7, 0.7, 1.75), (0.5, 1.8)),
    "bicycle": ((1.8, 0.6, 1.3), (1.0, 5.0)),
    "motorcycle": ((2.1, 0.8, 1.5), (2.0, 8.0)),
}


@dataclass
class ScenarioConfig:
    seed: int = 0
    n_frames: int = 41
    frame_dt: float = 0.5
    counts: dict = field(default_factory=lambda: {"car": 10})
    world_extent: float = 40.0  # half-width of the square world, meters
    ego_clearance: float = 5.0  # no spawns closer than this to the cameras
    turn_rate_sigma: float = 0.2  # rad/s
    late_birth_fraction: float = 0.3
    fp_rate: float = 0.1  # expected FPs per live object per frame
    fn_rate: float = 0.1
    center_noise_sigma: float = 0.3
    velocity_noise_sigma: float = 0.3
    tp_confidence: tuple = (0.2, 0.8, 1.0)  # triangular (left, mode, right)
    fp_confidence: tuple = (0.0, 0.3, 0.8)
    f_shape: int = 16
    f_cue: int = 16
    feature_noise_sigma: float = 0.5
    # weight of the shared per-class direction in object latents; FP
    # features lack it, which is what lets a detector-side FP look atypical
    class_prototype_scale: float = 0.7
    n_cameras: int = 6
    focal: float = 800.0
    image_size: tuple = (1600, 900)
    pixel_jitter: float = 4.0
    fn_rate_2d: float = 0.1
    fp_rate_2d: float = 0.3  # expected 2D FPs per camera per frame
    fp_downsample_ratio: float = 1.0

    def __post_init__(self):
        for name in ("fp_rate_2d",):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("fn_rate", "fn_rate_2d", "fp_downsample_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.fp_rate <= 1.0:
            raise ValueError("fp_rate must lie in [0, 1]")
        for name in ("center_noise_sigma", "velocity_noise_sigma", "feature_noise_sigma", "pixel_jitter", "class_prototype_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_frames < 2:
            raise ValueError("need at least two frames")
        if self.world_extent <= self.ego_clearance:
            raise ValueError("world extent leaves no area to place objects")
        if self.frame_dt <= 0:
            raise ValueError("frame_dt must be positive")
        unknown = set(self.counts) - set(CLASS_SPECS)
        if unknown:
            raise ValueError(f"unknown classes {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tp_confidence"] = list(self.tp_confidence)
        d["fp_confidence"] = list(self.fp_confidence)
        d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        for key in ("tp_confidence", "fp_confidence", "image_size"):
            d[key] = tuple(d[key])
        return cls(**d)


PRESETS = {
    "noise_free": dict(
        fp_rate=0.0,
        fn_rate=0.0,
        center_noise_sigma=0.0,
        velocity_noise_sigma=0.0,
        feature_noise_sigma=0.0,
        pixel_jitter=0.0,
        fn_rate_2d=0.0,
        fp_rate_2d=0.0,
        late_birth_fraction=0.0,
        turn_rate_sigma=0.0,
    ),
    "clean": dict(fp_rate=0.02, fn_rate=0.02, center_noise_sigma=0.1, feature_noise_sigma=0.3),
    "moderate": dict(),
    "fp_heavy": dict(fp_rate=0.5, fn_rate=0.1, fp_rate_2d=0.3),
}


def preset(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ScenarioConfig(**{**PRESETS[name], **overrides})


def _triangular(rng: np.random.Generator, spec) -> float:
    left, mode, right = spec
    if left == right:
        return float(left)
    return float(rng.triangular(left, mode, right))


@dataclass
class _Object:
    identity: int
    cls: str
    start: int
    latents: dict
    boxes: dict = field(default_factory=dict)  # frame -> Box3D


def class_prototypes(cls: str, f_shape: int, f_cue: int) -> dict:
    """Fixed per-class feature directions, identical in every scene."""
    rng = np.random.default_rng(zlib.crc32(cls.encode()))
    return {
        "shape": rng.normal(size=f_shape),
        "voxel": rng.normal(size=f_shape),
        "cue": rng.normal(size=f_cue),
    }


def _spawn_position(rng, cfg: ScenarioConfig):
    while True:
        xy = rng.uniform(-cfg.world_extent, cfg.world_extent, size=2)
        if math.hypot(*xy) >= cfg.ego_clearance:
            return xy


def _simulate_objects(rng, cfg: ScenarioConfig) -> list:
    objects = []
    identity = 0
    for cls in sorted(cfg.counts):
        size, (v_lo, v_hi) = CLASS_SPECS[cls]
        for _ in range(cfg.counts[cls]):
            late = rng.random() < cfg.late_birth_fraction
            start = int(rng.integers(1, cfg.n_frames - 1)) if late and cfg.n_frames > 2 else 0
            xy = _spawn_position(rng, cfg)
            heading = rng.uniform(-math.pi, math.pi)
            speed = rng.uniform(v_lo, v_hi)
            dims = np.asarray(size) * rng.uniform(0.9, 1.1, size=3)
            proto = class_prototypes(cls, cfg.f_shape, cfg.f_cue)
            latents = {
                name: cfg.class_prototype_scale * proto[name] + rng.normal(size=proto[name].shape)
                for name in ("shape", "voxel", "cue")
            }
            obj = _Object(identity, cls, start, latents)
            identity += 1
            for t in range(start, cfg.n_frames):
                if abs(xy[0]) > cfg.world_extent or abs(xy[1]) > cfg.world_extent:
                    break
                vel = speed * np.array([math.cos(heading), math.sin(heading)])
                obj.boxes[t] = Box3D((xy[0], xy[1], dims[2] / 2.0), dims, heading, vel)
                heading += rng.normal(0.0, cfg.turn_rate_sigma) * cfg.frame_dt
                xy = xy + vel * cfg.frame_dt
            objects.append(obj)
    return objects


def _features(rng, cfg, latents: Optional[dict], visible: bool) -> dict:
    out = {}
    for name, dim in (("shape", cfg.f_shape), ("voxel", cfg.f_shape), ("cue", cfg.f_cue)):
        if latents is None:
            vec = rng.normal(size=dim)
        else:
            vec = latents[name] + rng.normal(0.0, cfg.feature_noise_sigma, size=dim)
        if name == "cue" and not visible:
            # appearance comes from the image; nothing to pool when unseen
            vec = np.zeros(dim)
        out[name] = vec
    return out


def generate(config: ScenarioConfig) -> Scenario:
    """Deterministic function of ``config``: same config, identical scenario."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    rig = surround_rig(cfg.n_cameras, focal=cfg.focal, image_size=cfg.image_size)
    objects = _simulate_objects(rng, cfg)
    class_list = sorted(cfg.counts)
    class_weights = np.array([cfg.counts[c] for c in class_list], dtype=float)
    class_weights = class_weights / class_weights.sum() if class_weights.sum() > 0 else None

    frames = []
    for t in range(cfg.n_frames):
        gt = [GtObject(o.identity, o.cls, o.boxes[t]) for o in objects if t in o.boxes]
        dets3d = []
        for obj in gt:
            if rng.random() < cfg.fn_rate:
                continue
            src = obj.box
            noise = rng.normal(0.0, cfg.center_noise_sigma, size=3) * np.array([1.0, 1.0, 0.25])
            vnoise = rng.normal(0.0, cfg.velocity_noise_sigma, size=2)
            box = Box3D(src.center + noise, src.size, src.yaw, src.velocity + vnoise)
            conf = _triangular(rng, cfg.tp_confidence)
            latents = next(o.latents for o in objects if o.identity == obj.identity)
            visible = select_best_camera(box, rig) is not None
            dets3d.append(Detection3D(box, conf, obj.cls, _features(rng, cfg, latents, visible), obj.identity))

        n_fp = int(rng.poisson(cfg.fp_rate * len(gt))) if class_weights is not None else 0
        for _ in range(n_fp):
            cls = class_list[int(rng.choice(len(class_list), p=class_weights))]
            size, (v_lo, v_hi) = CLASS_SPECS[cls]
            xy = _spawn_position(rng, cfg)
            yaw = rng.uniform(-math.pi, math.pi)
            speed = rng.uniform(v_lo, v_hi)
            box = Box3D((xy[0], xy[1], size[2] / 2.0), size, yaw, speed * np.array([math.cos(yaw), math.sin(yaw)]))
            conf = _triangular(rng, cfg.fp_confidence)
            visible = select_best_camera(box, rig) is not None
            dets3d.append(Detection3D(box, conf, cls, _features(rng, cfg, None, visible), None))

        dets2d = []
        for obj in gt:
            best = select_best_camera(obj.box, rig)
            if best is None or rng.random() < cfg.fn_rate_2d:
                continue
            cam, pb = best
            j = rng.uniform(-cfg.pixel_jitter, cfg.pixel_jitter, size=4)
            box = Box2D(pb.x + j[0], pb.y + j[1], max(pb.w + j[2], 1.0), max(pb.h + j[3], 1.0))
            dets2d.append(Detection2D(box, cam, _triangular(rng, cfg.tp_confidence), obj.cls))
        if class_weights is not None:
            width, height = cfg.image_size
            for cam in range(cfg.n_cameras):
                for _ in range(int(rng.poisson(cfg.fp_rate_2d))):
                    w, h = rng.uniform(20.0, 200.0, size=2)
                    x = rng.uniform(0.0, width - w)
                    y = rng.uniform(0.0, height - h)
                    cls = class_list[int(rng.choice(len(class_list), p=class_weights))]
                    dets2d.append(Detection2D(Box2D(x, y, w, h), cam, _triangular(rng, cfg.fp_confidence), cls))
        frames.append(Frame(t, gt, dets3d, dets2d))
    return Scenario(cfg, rig, frames)


# ---------------------------------------------------------------------------
# training pairs
# ---------------------------------------------------------------------------


def top_detections(dets: list, n_max: int) -> list:
    """Keep at most ``n_max`` detections, highest confidence first (stable)."""
    order = sorted(range(len(dets)), key=lambda k: (-dets[k].confidence, k))
    return [dets[k] for k in order[:n_max]]


def downsample_false_positives(scenario: Scenario, ratio: float, rng: np.random.Generator, cls: Optional[str] = None) -> list:
    """Per-frame detection lists with each FP kept with probability ``ratio``."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    out = []
    for fr in scenario.frames:
        kept = []
        for det in fr.dets3d:
            if cls is not None and det.cls != cls:
                continue
            if det.gt_id is None and not rng.random() < ratio:
                continue
            kept.append(det)
        out.append(kept)
    return out


def predicted_center(box, dt: float) -> np.ndarray:
    """BEV center advanced by the box velocity over ``dt`` (z unchanged)."""
    c = np.array(box.center, dtype=float)
    c[:2] += np.asarray(box.velocity, dtype=float) * dt
    return c


def detection_rows(dets: list, dt: float = 0.0) -> dict:
    """Network input rows; ``dt > 0`` motion-compensates the box centers."""
    return {
        "boxes": [predicted_center(d.box, dt) for d in dets],
        "shape": [d.features["shape"] for d in dets],
        "voxel": [d.features["voxel"] for d in dets],
        "cue": [d.features["cue"] for d in dets],
    }


def coasting_detections(per_frame: list, t: int, dt: float, max_steps: int) -> list:
    """True detections from up to ``max_steps`` frames before ``t`` whose
    object went undetected since, advanced along their velocity.

    These stand in for the FN-propagated tracks a tracker carries into
    frame ``t``, including ghosts of objects that have left the scene.
    """
    out = []
    seen = set()
    for k in range(0, max_steps + 1):
        if t - k < 0:
            break
        frame_ids = {d.gt_id for d in per_frame[t - k] if d.gt_id is not None}
        if k > 0:
            for d in per_frame[t - k]:
                if d.gt_id is not None and d.gt_id not in seen:
                    box = d.box.translated(np.asarray(d.box.velocity) * dt * k)
                    out.append(replace(d, box=box))
        seen |= frame_ids
    return out


def to_training_pairs(
    scenario: Scenario,
    fp_downsample_ratio: float = 1.0,
    n_max: int = 16,
    cls: Optional[str] = None,
    seed: int = 0,
    coast_steps: int = 2,
) -> list:
    """Consecutive-frame ``(FeatureBundle, GtAffinityPair)`` examples.

    The previous side holds frame ``t - 1`` detections plus coasting
    copies of recently missed objects (see :func:`coasting_detections`).
    """
    cfg = scenario.config
    rng = np.random.default_rng(seed)
    per_frame = [top_detections(d, n_max) for d in downsample_false_positives(scenario, fp_downsample_ratio, rng, cls)]
    pairs = []
    # t = 0 pairs an empty previous frame with the first one: everything is newborn
    for t in range(len(scenario.frames)):
        if t > 0:
            prev = top_detections(per_frame[t - 1] + coasting_detections(per_frame, t - 1, cfg.frame_dt, coast_steps), n_max)
        else:
            prev = []
        curr = per_frame[t]
        bundle = FeatureBundle.from_rows(
            n_max, detection_rows(prev, cfg.frame_dt), detection_rows(curr), cfg.f_shape, cfg.f_cue
        )
        gt_prev = [(o.identity, o.box) for o in scenario.frames[t - 1].gt if cls is None or o.cls == cls] if t > 0 else []
        gt_curr = [(o.identity, o.box) for o in scenario.frames[t].gt if cls is None or o.cls == cls]
        gt = build_gt_affinity(
            [d.box for d in prev],
            [d.confidence for d in prev],
            [d.box for d in curr],
            [d.confidence for d in curr],
            gt_prev,
            gt_curr,
            n_max,
        )
        if gt.fm.sum() == 0 and gt.bm.sum() == 0:
            continue
        pairs.append((bundle, gt))
    return pairs


def make_training_set(
    n_pairs: int = 200,
    seed: int = 42,
    base: Optional[ScenarioConfig] = None,
    n_max: int = 16,
    cls: str = "car",
) -> list:
    """Collect ``n_pairs`` examples from freshly seeded scenes."""
    base = base or ScenarioConfig()
    seeds = np.random.SeedSequence(seed)
    out = []
    while len(out) < n_pairs:
        child = int(seeds.spawn(1)[0].generate_state(1)[0])
        scn = generate(replace(base, seed=child))
        out.extend(to_training_pairs(scn, base.fp_downsample_ratio, n_max, cls, seed=child))
    return out[:n_pairs]
