"""Versioned JSON file formats for scenarios, tracks, checkpoints and
metric reports, plus atomic writes.

Floats are written with Python's shortest round-trip repr, so reading a
file back reproduces the in-memory values exactly.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from typing import Optional

import numpy as np

from .geometry import Box2D, Box3D, CameraModel, CameraRig
from .metrics import MetricsReport
from .network import NetConfig, ResidualNet
from .refine import Detection2D
from .scene import Detection3D, Frame, GtObject, Scenario
from .simgen import ScenarioConfig
from .tracker import TrackRecord

SCENARIO_FORMAT = "fusetrack.scenario"
TRACKS_FORMAT = "fusetrack.tracks"
CHECKPOINT_FORMAT = "fusetrack.checkpoint"
REPORT_FORMAT = "fusetrack.report"
VERSION = 1


class FormatError(ValueError):
    """File content is not a supported fusetrack document."""


# -- low level --------------------------------------------------------------


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def atomic_write_text(path, text: str):
    """Write via a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_doc(path, fmt: str, body: dict):
    atomic_write_text(path, dumps({"format": fmt, "version": VERSION, **body}))


def _read_doc(path, fmt: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != fmt:
        found = doc.get("format") if isinstance(doc, dict) else type(doc).__name__
        raise FormatError(f"{path}: expected a {fmt} file, found {found!r}")
    if doc.get("version") != VERSION:
        raise FormatError(f"{path}: unsupported {fmt} version {doc.get('version')!r} (this build reads {VERSION})")
    return doc


def _vec(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


# -- boxes and cameras ------------------------------------------------------


def box3d_to_dict(box: Box3D) -> dict:
    return {
        "center": _vec(box.center),
        "size": _vec(box.size),
        "yaw": float(box.yaw),
        "velocity": _vec(box.velocity),
    }


def box3d_from_dict(d: dict) -> Box3D:
    return Box3D(d["center"], d["size"], d["yaw"], d["velocity"])


def _camera_to_dict(cam: CameraModel) -> dict:
    return {
        "name": cam.name,
        "intrinsics": np.asarray(cam.intrinsics, dtype=float).tolist(),
        "rotation": np.asarray(cam.rotation, dtype=float).tolist(),
        "translation": _vec(cam.translation),
        "image_size": list(cam.image_size),
    }


def _camera_from_dict(d: dict) -> CameraModel:
    return CameraModel(
        d["name"],
        np.array(d["intrinsics"], dtype=float),
        np.array(d["rotation"], dtype=float),
        np.array(d["translation"], dtype=float),
        tuple(d["image_size"]),
    )


# -- scenario ---------------------------------------------------------------


def scenario_to_dict(s: Scenario) -> dict:
    frames = []
    for fr in s.frames:
        frames.append(
            {
                "index": fr.index,
                "gt": [{"id": o.identity, "cls": o.cls, "box": box3d_to_dict(o.box)} for o in fr.gt],
                "dets3d": [
                    {
                        "box": box3d_to_dict(d.box),
                        "confidence": float(d.confidence),
                        "cls": d.cls,
                        "features": {k: _vec(v) for k, v in d.features.items()},
                        "gt_id": d.gt_id,
                    }
                    for d in fr.dets3d
                ],
                "dets2d": [
                    {
                        "box": [float(v) for v in d.box.as_tuple()],
                        "camera": d.camera_index,
                        "confidence": float(d.confidence),
                        "cls": d.cls,
                    }
                    for d in fr.dets2d
                ],
            }
        )
    return {
        "config": s.config.to_dict(),
        "rig": [_camera_to_dict(c) for c in s.rig.cameras],
        "frames": frames,
    }


def scenario_from_dict(doc: dict) -> Scenario:
    frames = []
    for f in doc["frames"]:
        gt = [GtObject(o["id"], o["cls"], box3d_from_dict(o["box"])) for o in f["gt"]]
        dets3d = [
            Detection3D(
                box3d_from_dict(d["box"]),
                d["confidence"],
                d["cls"],
                {k: np.array(v, dtype=float) for k, v in d["features"].items()},
                d["gt_id"],
            )
            for d in f["dets3d"]
        ]
        dets2d = [Detection2D(Box2D(*d["box"]), d["camera"], d["confidence"], d["cls"]) for d in f["dets2d"]]
        frames.append(Frame(f["index"], gt, dets3d, dets2d))
    rig = CameraRig(tuple(_camera_from_dict(c) for c in doc["rig"]))
    return Scenario(ScenarioConfig.from_dict(doc["config"]), rig, frames)


def write_scenario(path, s: Scenario):
    _write_doc(path, SCENARIO_FORMAT, scenario_to_dict(s))


def read_scenario(path) -> Scenario:
    return scenario_from_dict(_read_doc(path, SCENARIO_FORMAT))


# -- tracks -----------------------------------------------------------------


def write_tracks(path, frames: list, meta: Optional[dict] = None):
    """``frames`` is one list of :class:`TrackRecord` per frame."""
    body = {
        "meta": meta or {},
        "frames": [
            [
                {
                    "frame": r.frame,
                    "track_id": r.track_id,
                    "cls": r.cls,
                    "box": box3d_to_dict(r.box),
                    "confidence": float(r.confidence),
                    "status": r.status,
                }
                for r in records
            ]
            for records in frames
        ],
    }
    _write_doc(path, TRACKS_FORMAT, body)


def read_tracks(path):
    """Returns ``(frames, meta)``."""
    doc = _read_doc(path, TRACKS_FORMAT)
    frames = [
        [
            TrackRecord(r["frame"], r["track_id"], r["cls"], box3d_from_dict(r["box"]), r["confidence"], r["status"])
            for r in records
        ]
        for records in doc["frames"]
    ]
    return frames, doc["meta"]


# -- checkpoint -------------------------------------------------------------


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def checkpoint_payload(net: ResidualNet, cls: str, extra: Optional[dict] = None) -> dict:
    params = {
        name: {"shape": list(arr.shape), "data": _vec(arr)} for name, arr in net.parameters().items()
    }
    return {"class": cls, "net_config": net.config.to_dict(), "params": params, "extra": extra or {}}


def write_checkpoint(path, net: ResidualNet, cls: str, extra: Optional[dict] = None):
    payload = checkpoint_payload(net, cls, extra)
    _write_doc(path, CHECKPOINT_FORMAT, {"payload": payload, "sha256": _checksum(payload)})


def read_checkpoint(path, expect_class: Optional[str] = None):
    """Returns ``(net, cls, extra)``; verifies the checksum and, if given,
    that the checkpoint was trained for ``expect_class``."""
    doc = _read_doc(path, CHECKPOINT_FORMAT)
    payload = doc["payload"]
    if _checksum(payload) != doc.get("sha256"):
        raise FormatError(f"{path}: checkpoint checksum mismatch")
    cls = payload["class"]
    if expect_class is not None and cls != expect_class:
        raise FormatError(f"{path}: checkpoint is for class {cls!r}, not {expect_class!r}")
    net = ResidualNet(NetConfig.from_dict(payload["net_config"]))
    values = {
        name: np.array(p["data"], dtype=float).reshape(p["shape"]) for name, p in payload["params"].items()
    }
    net.load_parameters(values)
    return net, cls, payload["extra"]


# -- reports ----------------------------------------------------------------


def report_text(report: MetricsReport) -> str:
    return dumps({"format": REPORT_FORMAT, "version": VERSION, **report.to_dict()})


def write_report(path, report: MetricsReport):
    atomic_write_text(path, report_text(report))


def read_report(path) -> dict:
    return _read_doc(path, REPORT_FORMAT)


def recall_table(report: MetricsReport) -> str:
    """Per-recall rows of every class as tab-separated text."""
    cols = ["class", "recall_target", "reachable", "threshold", "recall", "tp", "fp", "fn", "ids", "motar", "motp"]
    lines = ["\t".join(cols)]
    for cls, m in report.per_class.items():
        for r in m.rows:
            vals = [cls] + [getattr(r, c) for c in cols[1:]]
            lines.append("\t".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in vals))
    return "\n".join(lines) + "\n"


def loss_table(curve) -> str:
    lines = ["epoch\tmean_loss"]
    lines.extend(f"{k}\t{loss!r}" for k, loss in enumerate(curve))
    return "\n".join(lines) + "\n"
