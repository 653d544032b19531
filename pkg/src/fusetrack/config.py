"""Committed default constants and the run configuration built on them."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional


def load_defaults() -> dict:
    with resources.files("fusetrack").joinpath("defaults.json").open("r", encoding="utf-8") as fh:
        return json.load(fh)


DEFAULTS = load_defaults()


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``override`` wins on leaves."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_file(cls, path: Optional[str]) -> "RunConfig":
        if path is None:
            return cls()
        with open(path, "r", encoding="utf-8") as fh:
            return cls(merge(DEFAULTS, json.load(fh)))

    def lifecycle(self):
        from .association import LifecycleThresholds

        return LifecycleThresholds(**self.values["lifecycle"])

    def refine_params(self, cls: str):
        from .refine import RefineParams

        r = self.values["refine"]
        if cls not in r["tau_iou"]:
            raise KeyError(f"unknown class {cls!r}")
        return RefineParams(r["tau_iou"][cls], r["beta1"], r["beta2_overrides"].get(cls, r["beta2"]))

    def n_max(self) -> int:
        n = int(self.values["n_max"])
        lo, hi = self.values["n_max_bounds"]
        if not lo <= n <= hi:
            raise ValueError(f"n_max {n} outside [{lo}, {hi}]")
        return n
