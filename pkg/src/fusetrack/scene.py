"""Plain containers shared by the generator, tracker and file formats."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .geometry import Box3D, CameraRig
from .refine import Detection2D


@dataclass
class GtObject:
    identity: int
    cls: str
    box: Box3D


@dataclass
class Detection3D:
    box: Box3D
    confidence: float
    cls: str
    # channel name -> vector: "shape", "voxel", "cue"
    features: dict = field(default_factory=dict)
    # generator-side truth; None for false positives
    gt_id: Optional[int] = None


@dataclass
class Frame:
    index: int
    gt: list
    dets3d: list
    dets2d: list


@dataclass
class Scenario:
    config: object
    rig: CameraRig
    frames: list

    def classes(self) -> list:
        seen = []
        for fr in self.frames:
            for obj in fr.gt:
                if obj.cls not in seen:
                    seen.append(obj.cls)
            for det in fr.dets3d:
                if det.cls not in seen:
                    seen.append(det.cls)
        return seen
