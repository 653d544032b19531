"""Boxes, pinhole cameras and the planar overlap/distance primitives.

World frame: x forward, y left, z up (meters). Camera frame: x right,
y down, z along the optical axis. Image boxes are (x, y, w, h) in pixels
with (x, y) the top-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


def wrap_angle(theta: float) -> float:
    """Map an angle to [-pi, pi)."""
    if -math.pi <= theta < math.pi:
        return theta
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    # float modulo can land exactly on +pi
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Box3D:
    center: np.ndarray
    size: np.ndarray  # (length, width, height)
    yaw: float = 0.0
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(3)
        size = np.asarray(self.size, dtype=float).reshape(3)
        velocity = np.asarray(self.velocity, dtype=float).reshape(2)
        if not np.all(size > 0):
            raise ValueError(f"box size must be strictly positive, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "velocity", velocity)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    def corners(self) -> np.ndarray:
        """The 8 corners in world coordinates, shape (8, 3)."""
        l, w, h = self.size / 2.0
        signs = np.array(
            [[sx, sy, sz] for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)],
            dtype=float,
        )
        local = signs * np.array([l, w, h])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return local @ rot.T + self.center

    def translated(self, offset) -> "Box3D":
        offset = np.asarray(offset, dtype=float)
        center = self.center.copy()
        center[: offset.shape[0]] += offset
        return Box3D(center, self.size, self.yaw, self.velocity)

    def __eq__(self, other):
        if not isinstance(other, Box3D):
            return NotImplemented
        return (
            np.array_equal(self.center, other.center)
            and np.array_equal(self.size, other.size)
            and self.yaw == other.yaw
            and np.array_equal(self.velocity, other.velocity)
        )

    __hash__ = None


@dataclass(frozen=True)
class Box2D:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box extent: w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera. ``rotation``/``translation`` map world to camera:
    ``p_cam = rotation @ p_world + translation``."""

    name: str
    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: tuple  # (width, height)

    def __post_init__(self):
        K = np.asarray(self.intrinsics, dtype=float).reshape(3, 3)
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("camera rotation must be orthonormal with det +1")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))

    @classmethod
    def looking_along(
        cls,
        name: str,
        position,
        heading: float,
        focal: float = 800.0,
        image_size: tuple = (1600, 900),
    ) -> "CameraModel":
        """Level camera at ``position`` whose optical axis points along the
        world-frame ``heading`` (radians, counter-clockwise from +x)."""
        c, s = math.cos(heading), math.sin(heading)
        forward = np.array([c, s, 0.0])
        right = np.array([s, -c, 0.0])
        down = np.array([0.0, 0.0, -1.0])
        R = np.stack([right, down, forward])
        t = -R @ np.asarray(position, dtype=float)
        w, h = image_size
        K = np.array([[focal, 0.0, w / 2.0], [0.0, focal, h / 2.0], [0.0, 0.0, 1.0]])
        return cls(name, K, R, t, (w, h))

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation


@dataclass(frozen=True)
class CameraRig:
    cameras: tuple

    def __post_init__(self):
        cams = tuple(self.cameras)
        if not 1 <= len(cams) <= 6:
            raise ValueError(f"a rig holds 1 to 6 cameras, got {len(cams)}")
        names = [c.name for c in cams]
        if len(set(names)) != len(names):
            raise ValueError(f"camera names must be distinct: {names}")
        object.__setattr__(self, "cameras", cams)

    def __len__(self):
        return len(self.cameras)

    def __getitem__(self, idx):
        return self.cameras[idx]


def surround_rig(
    n_cameras: int = 6,
    height: float = 1.5,
    focal: float = 800.0,
    image_size: tuple = (1600, 900),
) -> CameraRig:
    """Evenly spaced ring of level cameras around the origin."""
    cams = [
        CameraModel.looking_along(
            f"cam{k}", (0.0, 0.0, height), 2.0 * math.pi * k / n_cameras, focal, image_size
        )
        for k in range(n_cameras)
    ]
    return CameraRig(tuple(cams))


def project_box3d(box: Box3D, cam: CameraModel) -> Optional[Box2D]:
    """Image-plane hull of the box corners in front of the camera, clipped
    to the image. None when nothing is visible."""
    pts = cam.to_camera(box.corners())
    pts = pts[pts[:, 2] > 0]
    if len(pts) == 0:
        return None
    uvw = pts @ cam.intrinsics.T
    u = uvw[:, 0] / uvw[:, 2]
    v = uvw[:, 1] / uvw[:, 2]
    width, height = cam.image_size
    x0 = min(max(u.min(), 0.0), width)
    x1 = min(max(u.max(), 0.0), width)
    y0 = min(max(v.min(), 0.0), height)
    y1 = min(max(v.max(), 0.0), height)
    if x1 <= x0 or y1 <= y0:
        return None
    return Box2D(float(x0), float(y0), float(x1 - x0), float(y1 - y0))


def select_best_camera(box: Box3D, rig: CameraRig) -> Optional[tuple]:
    """(camera_index, Box2D) of the camera with the largest projected area."""
    best = None
    for idx, cam in enumerate(rig.cameras):
        proj = project_box3d(box, cam)
        if proj is None:
            continue
        # strict > keeps the lowest index on ties
        if best is None or proj.area > best[1].area:
            best = (idx, proj)
    return best


def iou_2d(a: Box2D, b: Box2D) -> float:
    if a == b:
        return 1.0 if a.area > 0 else 0.0
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    # edge arithmetic can overshoot the true overlap by an ulp
    inter = min(ix * iy, a.area, b.area)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def center_distance_bev(a: Box3D, b: Box3D) -> float:
    return float(math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]))


def pairwise_bev_distance(a_centers: np.ndarray, b_centers: np.ndarray) -> np.ndarray:
    """Distance matrix between two sets of (x, y, ...) centers."""
    a = np.asarray(a_centers, dtype=float)[:, None, :2]
    b = np.asarray(b_centers, dtype=float)[None, :, :2]
    return np.sqrt(((a - b) ** 2).sum(-1))


def iou_matrix(boxes_a: Sequence[Box2D], boxes_b: Sequence[Box2D]) -> np.ndarray:
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = iou_2d(a, b)
    return out
