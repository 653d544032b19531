"""Learned vs heuristic affinities, and refinement on/off, over a few seeds.

Usage: python3 demos/compare_affinities.py [n_seeds] [first_seed]
"""

import sys
from pathlib import Path

import numpy as np

from fusetrack.fileio import read_checkpoint
from fusetrack.metrics import evaluate_scenario
from fusetrack.simgen import generate, preset
from fusetrack.tracker import HeuristicAffinity, LearnedAffinity, TrackerOptions, run_scenario

CKPT = Path(__file__).resolve().parents[1] / "models" / "car.ckpt.json"


def main(n_seeds=5, first=500):
    net, _, _ = read_checkpoint(CKPT, expect_class="car")
    setups = {
        "learned": (lambda: LearnedAffinity(net), True),
        "learned, no refine": (lambda: LearnedAffinity(net), False),
        "heuristic": (HeuristicAffinity, True),
    }
    for name in ("noise_free", "clean", "moderate", "fp_heavy"):
        scores = {k: [] for k in setups}
        for seed in range(first, first + n_seeds):
            scn = generate(preset(name, seed=seed))
            for label, (make, refine_on) in setups.items():
                frames = run_scenario(scn, {"car": make()}, TrackerOptions(refine=refine_on))
                scores[label].append(evaluate_scenario(scn, frames).amota)
        row = "  ".join(f"{k} {np.mean(v):.3f}" for k, v in scores.items())
        print(f"{name:<10} AMOTA  {row}")


if __name__ == "__main__":
    args = [int(a) for a in sys.argv[1:]]
    main(*args)
