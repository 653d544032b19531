"""Quick built-in invariant checks, runnable without a test framework."""

from __future__ import annotations

import math

import numpy as np

from .affinity import GtAffinityPair, backward_matching, forward_matching, log_affinity_loss
from .association import associate
from .geometry import Box3D, CameraModel, project_box3d
from .metrics import EvalConfig, evaluate_scenario
from .network import FeatureBundle, NetConfig, ResidualNet
from .refine import f_hat
from .simgen import generate, preset
from .tracker import TrackRecord


def check_stochastic(trials: int = 200) -> bool:
    rng = np.random.default_rng(0)
    for _ in range(trials):
        n = int(rng.integers(1, 17))
        logits = rng.normal(0.0, 5.0, size=(n + 2, n + 2))
        fm = forward_matching(logits, n).values
        bm = backward_matching(logits, n).values
        if np.max(np.abs(fm.sum(axis=1) - 1)) > 1e-9 or np.max(np.abs(bm.sum(axis=0) - 1)) > 1e-9:
            return False
    return True


def check_worked_loss() -> bool:
    fm = np.array([[0.8, 0.1, 0.1]])
    bm = fm.T.copy()
    gt = GtAffinityPair(np.array([[1.0, 0.0, 0.0]]), np.array([[1.0], [0.0], [0.0]]))
    return abs(log_affinity_loss(fm, bm, gt) + math.log(0.8)) < 1e-9


def check_gradient(n_params: int = 20) -> bool:
    rng = np.random.default_rng(1)
    cfg = NetConfig(n_max=4, f_shape=8, f_cue=8, seed=3)
    net = ResidualNet(cfg)
    rows = lambda k: {  # noqa: E731
        "boxes": list(rng.normal(0, 10, size=(k, 3))),
        "shape": list(rng.normal(size=(k, 8))),
        "voxel": list(rng.normal(size=(k, 8))),
        "cue": list(rng.normal(size=(k, 8))),
    }
    bundle = FeatureBundle.from_rows(4, rows(3), rows(3), 8, 8)
    fm = np.zeros((4, 6))
    bm = np.zeros((6, 4))
    fm[0, 1] = fm[1, 0] = fm[2, 5] = 1
    bm[1, 0] = bm[0, 1] = bm[5, 2] = 1
    gt = GtAffinityPair(fm, bm)
    _, grads = net.loss_and_grad(bundle, gt)
    params = net.parameters()
    names = list(params)
    worst = 0.0
    for _ in range(n_params):
        name = names[int(rng.integers(len(names)))]
        arr = params[name]
        idx = tuple(int(rng.integers(s)) for s in arr.shape)
        old = arr[idx]
        h = 1e-5
        arr[idx] = old + h
        net.mark_updated()
        up = net.loss(bundle, gt)
        arr[idx] = old - h
        net.mark_updated()
        down = net.loss(bundle, gt)
        arr[idx] = old
        net.mark_updated()
        num = (up - down) / (2 * h)
        ana = grads[name][idx]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    return worst < 1e-4


def check_f_hat() -> bool:
    return f_hat(0.5, 0.3, 0.6) == 0.25 and f_hat(0.9, 0.9, 0.6) == 1.0


def check_associate() -> bool:
    fm = np.zeros((1, 3))
    fm[0] = [0.9, 0.05, 0.05]
    bm = fm.T.copy()
    return associate(fm, bm, 1, 1).matches == [(0, 0)]


def check_projection() -> bool:
    cam = CameraModel.looking_along("c", (0.0, 0.0, 0.0), 0.0, focal=500.0, image_size=(1000, 1000))
    box = project_box3d(Box3D((10.5, 0.0, 0.0), (1.0, 1.0, 1.0), 0.0), cam)
    return box is not None and abs(box.w - 50.0) < 1e-9 and abs(box.h - 50.0) < 1e-9


def check_metrics_extremes() -> bool:
    scn = generate(preset("clean", seed=5, n_frames=8))
    perfect = [
        [TrackRecord(fr.index, o.identity, o.cls, o.box, 1.0, "active") for o in fr.gt] for fr in scn.frames
    ]
    empty = [[] for _ in scn.frames]
    cfg = EvalConfig()
    return evaluate_scenario(scn, perfect, cfg).amota == 1.0 and evaluate_scenario(scn, empty, cfg).amota == 0.0


CHECKS = [
    ("forward/backward stochasticity", check_stochastic),
    ("worked log affinity loss", check_worked_loss),
    ("network gradient vs finite differences", check_gradient),
    ("f_hat reward", check_f_hat),
    ("dominant-diagonal association", check_associate),
    ("pinhole projection of a unit cube", check_projection),
    ("perfect and empty tracker AMOTA", check_metrics_extremes),
]


def run_all(verbose: bool = False) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            passed = bool(fn())
        except Exception as exc:  # a crash is a failed check, reported by name
            passed = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}")
    return ok
