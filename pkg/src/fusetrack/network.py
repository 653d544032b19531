"""Residual affinity network: anchor representations, pairwise residuals
for four feature channels, learned per-cell fusion weights and the affinity
head, with exact gradients of the log affinity loss."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .affinity import GtAffinityPair, log_affinity_loss_grad
from .mlp import Mlp

# residual channel order; fusion weights come out of the alpha MLP in this order
CHANNELS = ("voxel", "box", "shape", "cue")
# channels concatenated into the fusion-weight input, in this order
WEIGHT_INPUT_CHANNELS = ("box", "shape", "cue")
ANCHORS = ("fp", "nb", "fn", "dt")
BOX_DIM = 3


@dataclass
class FeatureBundle:
    """Zero-padded per-frame descriptors for one (previous, current) pair.

    ``voxel_*`` is the second shape-width channel that stands in for the BEV
    backbone features.
    """

    boxes_prev: np.ndarray
    boxes_curr: np.ndarray
    shape_prev: np.ndarray
    shape_curr: np.ndarray
    voxel_prev: np.ndarray
    voxel_curr: np.ndarray
    cue_prev: np.ndarray
    cue_curr: np.ndarray
    n_prev: int
    n_curr: int

    def __post_init__(self):
        n_max = self.boxes_prev.shape[0]
        for name in ("boxes", "shape", "voxel", "cue"):
            for side in ("prev", "curr"):
                arr = getattr(self, f"{name}_{side}")
                if arr.ndim != 2 or arr.shape[0] != n_max:
                    raise ValueError(f"{name}_{side} must have {n_max} rows, got {arr.shape}")
        if self.boxes_prev.shape[1] != BOX_DIM:
            raise ValueError("box descriptors are (x, y, z) centers")
        if not (0 <= self.n_prev <= n_max and 0 <= self.n_curr <= n_max):
            raise ValueError("valid counts exceed n_max")

    @property
    def n_max(self) -> int:
        return self.boxes_prev.shape[0]

    def channel(self, name: str):
        key = "boxes" if name == "box" else name
        return getattr(self, f"{key}_prev"), getattr(self, f"{key}_curr")

    @classmethod
    def from_rows(cls, n_max: int, prev: dict, curr: dict, f_shape: int, f_cue: int) -> "FeatureBundle":
        """Zero-pad per-detection rows to ``n_max``.

        ``prev``/``curr`` map ``boxes``/``shape``/``voxel``/``cue`` to
        sequences of vectors of equal length.
        """
        widths = {"boxes": BOX_DIM, "shape": f_shape, "voxel": f_shape, "cue": f_cue}
        arrays = {}
        counts = {}
        for side, rows in (("prev", prev), ("curr", curr)):
            for name, dim in widths.items():
                data = np.asarray(rows[name], dtype=float).reshape(-1, dim)
                if len(data) > n_max:
                    raise ValueError("more rows than n_max")
                out = np.zeros((n_max, dim))
                out[: len(data)] = data
                arrays[f"{name}_{side}"] = out
                counts[side] = len(data)
        return cls(n_prev=counts["prev"], n_curr=counts["curr"], **arrays)


@dataclass
class NetConfig:
    n_max: int = 16
    f_shape: int = 16
    f_cue: int = 16
    hidden: tuple = (32, 32)
    aff_hidden: int = 16
    box_scale: float = 0.1
    seed: int = 0

    def channel_dim(self, name: str) -> int:
        return {"voxel": self.f_shape, "box": BOX_DIM, "shape": self.f_shape, "cue": self.f_cue}[name]

    @property
    def weight_input_dim(self) -> int:
        return 2 * self.f_shape + 2 * self.f_cue + 2 * BOX_DIM

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["hidden"] = tuple(d["hidden"])
        return cls(**d)


# ---------------------------------------------------------------------------
# building blocks (also usable on their own)
# ---------------------------------------------------------------------------


def _pool(x: np.ndarray, n_valid: int) -> np.ndarray:
    if n_valid == 0:
        return np.zeros(x.shape[1])
    return x[:n_valid].mean(axis=0)


def _pool_batch(x: np.ndarray, n_valid: np.ndarray) -> np.ndarray:
    mask = np.arange(x.shape[1])[None, :] < n_valid[:, None]
    total = (x * mask[..., None]).sum(axis=1)
    return total / np.maximum(n_valid, 1)[:, None]


def anchor_cues(cues_curr, cues_prev, mlps: dict, n_curr: Optional[int] = None, n_prev: Optional[int] = None):
    """Anchor vectors ``(fp, nb, fn, dt)``.

    FP/NB are built from the current frame, FN/DT from the previous one.
    Each MLP sees the mean of the valid rows; counts default to all rows.
    """
    cues_curr = np.asarray(cues_curr, dtype=float)
    cues_prev = np.asarray(cues_prev, dtype=float)
    if cues_curr.shape[1:] != cues_prev.shape[1:]:
        raise ValueError("current and previous cue widths differ")
    n_curr = len(cues_curr) if n_curr is None else n_curr
    n_prev = len(cues_prev) if n_prev is None else n_prev
    pooled_curr = _pool(cues_curr, n_curr)
    pooled_prev = _pool(cues_prev, n_prev)
    return (
        mlps["fp"](pooled_curr),
        mlps["nb"](pooled_curr),
        mlps["fn"](pooled_prev),
        mlps["dt"](pooled_prev),
    )


def pair_tensor(feat_prev: np.ndarray, feat_curr: np.ndarray) -> np.ndarray:
    """Cell (i, j) holds ``concat(feat_prev[i], feat_curr[j])``."""
    feat_prev = np.asarray(feat_prev, dtype=float)
    feat_curr = np.asarray(feat_curr, dtype=float)
    if feat_prev.shape[1] != feat_curr.shape[1]:
        raise ValueError("feature widths differ")
    m_p, m_c = len(feat_prev), len(feat_curr)
    return np.concatenate(
        [
            np.broadcast_to(feat_prev[:, None, :], (m_p, m_c, feat_prev.shape[1])),
            np.broadcast_to(feat_curr[None, :, :], (m_p, m_c, feat_curr.shape[1])),
        ],
        axis=-1,
    )


def pairwise_residual(feat_prev, feat_curr, mlp: Mlp) -> np.ndarray:
    return mlp(pair_tensor(feat_prev, feat_curr))[..., 0]


def fuse_residuals(w_hat: np.ndarray, residuals, alpha_mlp: Mlp):
    """Weighted Hadamard sum of the ``(voxel, box, shape, cue)`` residuals.

    Returns ``(R, alpha)`` where alpha has a trailing axis of 4.
    """
    residuals = [np.asarray(r, dtype=float) for r in residuals]
    if len(residuals) != 4:
        raise ValueError("expected four residual matrices")
    alpha = alpha_mlp(w_hat)
    if alpha.shape[:-1] != residuals[0].shape or any(r.shape != residuals[0].shape for r in residuals):
        raise ValueError("residual and weight shapes differ")
    R = sum(alpha[..., k] * residuals[k] for k in range(4))
    return R, alpha


def affinity_head(R: np.ndarray, aff_mlp: Mlp) -> np.ndarray:
    return aff_mlp(np.asarray(R, dtype=float)[..., None])[..., 0]


# ---------------------------------------------------------------------------
# the full network
# ---------------------------------------------------------------------------


class StaleCacheError(RuntimeError):
    pass


@dataclass
class ForwardCache:
    version: int
    bundles: list
    counts: tuple = ()
    anchor_caches: dict = field(default_factory=dict)
    hats: dict = field(default_factory=dict)
    residual_caches: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    alpha: Optional[np.ndarray] = None
    alpha_cache: list = field(default_factory=list)
    R: Optional[np.ndarray] = None
    aff_cache: list = field(default_factory=list)


class ResidualNet:
    def __init__(self, config: Optional[NetConfig] = None):
        self.config = config or NetConfig()
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        self.mlps: dict = {}
        for ch in CHANNELS:
            dim = cfg.channel_dim(ch)
            for kind in ANCHORS:
                self.mlps[f"anchor_{kind}_{ch}"] = Mlp([dim, 2 * dim, dim], rng)
            self.mlps[f"residual_{ch}"] = Mlp([2 * dim, *cfg.hidden, 1], rng)
        self.mlps["alpha"] = Mlp([cfg.weight_input_dim, *cfg.hidden, 4], rng)
        self.mlps["aff"] = Mlp([1, cfg.aff_hidden, 1], rng)
        self.version = 0

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> dict:
        """Ordered ``name -> array`` view; arrays are live references."""
        out = {}
        for mname, mlp in self.mlps.items():
            for pname, arr in mlp.params():
                out[f"{mname}.{pname}"] = arr
        return out

    def n_parameters(self) -> int:
        return sum(a.size for a in self.parameters().values())

    def mark_updated(self):
        self.version += 1

    def load_parameters(self, values: dict):
        params = self.parameters()
        if set(values) != set(params):
            raise ValueError("parameter names do not match this network")
        for name, arr in params.items():
            src = np.asarray(values[name], dtype=float)
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            arr[...] = src
        self.mark_updated()

    def _weight_input_columns(self):
        """Positions of the previous-side and current-side features inside
        the fusion-weight input ``[box_p, box_c, shape_p, shape_c, cue_p, cue_c]``."""
        a_cols, b_cols = [], []
        offset = 0
        for ch in WEIGHT_INPUT_CHANNELS:
            dim = self.config.channel_dim(ch)
            a_cols.extend(range(offset, offset + dim))
            b_cols.extend(range(offset + dim, offset + 2 * dim))
            offset += 2 * dim
        return np.array(a_cols), np.array(b_cols)

    # -- forward / backward -------------------------------------------------

    def forward(self, bundle: FeatureBundle):
        """Logits ``(n_max + 2, n_max + 2)`` and the cache for :meth:`backward`."""
        logits, cache = self.forward_batch([bundle])
        return logits[0], cache

    def forward_batch(self, bundles):
        """Stacked forward pass over several bundles sharing ``n_max``."""
        cfg = self.config
        n = cfg.n_max
        for b in bundles:
            if b.n_max != n:
                raise ValueError(f"bundle n_max {b.n_max} != network n_max {n}")
        n_prev = np.array([b.n_prev for b in bundles])
        n_curr = np.array([b.n_curr for b in bundles])
        cache = ForwardCache(self.version, bundles)
        cache.counts = (n_prev, n_curr)
        for ch in CHANNELS:
            prev = np.stack([b.channel(ch)[0] for b in bundles])
            curr = np.stack([b.channel(ch)[1] for b in bundles])
            if prev.shape[2] != cfg.channel_dim(ch):
                raise ValueError(f"{ch} width {prev.shape[2]} != {cfg.channel_dim(ch)}")
            if ch == "box":
                prev, curr = prev * cfg.box_scale, curr * cfg.box_scale
            pooled = {"curr": _pool_batch(curr, n_curr), "prev": _pool_batch(prev, n_prev)}
            anchors = {}
            for kind in ANCHORS:
                src = "curr" if kind in ("fp", "nb") else "prev"
                anchors[kind], cache.anchor_caches[(ch, kind)] = self.mlps[f"anchor_{kind}_{ch}"].forward(pooled[src])
            prev_hat = np.concatenate([prev, anchors["fp"][:, None], anchors["nb"][:, None]], axis=1)
            curr_hat = np.concatenate([curr, anchors["dt"][:, None], anchors["fn"][:, None]], axis=1)
            out, cache.residual_caches[ch] = self.mlps[f"residual_{ch}"].forward_pair(prev_hat, curr_hat)
            cache.hats[ch] = (prev_hat, curr_hat)
            cache.residuals[ch] = out[..., 0]
        # alpha sees concat(box pair, shape pair, cue pair) per cell
        a_cols, b_cols = self._weight_input_columns()
        cache.alpha, cache.alpha_cache = self.mlps["alpha"].forward_pair(
            np.concatenate([cache.hats[ch][0] for ch in WEIGHT_INPUT_CHANNELS], axis=-1),
            np.concatenate([cache.hats[ch][1] for ch in WEIGHT_INPUT_CHANNELS], axis=-1),
            a_cols,
            b_cols,
        )
        cache.R = sum(cache.alpha[..., k] * cache.residuals[ch] for k, ch in enumerate(CHANNELS))
        logits, cache.aff_cache = self.mlps["aff"].forward(cache.R[..., None])
        return logits[..., 0], cache

    def logits(self, bundle: FeatureBundle) -> np.ndarray:
        return self.forward(bundle)[0]

    def backward(self, dlogits: np.ndarray, cache: ForwardCache) -> dict:
        """Gradients (same keys as :meth:`parameters`) given d(loss)/d(logits).

        ``dlogits`` is one matrix per bundle in the cache (a bare matrix is
        accepted for a single bundle); contributions are summed.
        """
        if cache is None or cache.version != self.version:
            raise StaleCacheError("forward cache does not match current parameters")
        cfg = self.config
        n = cfg.n_max
        dlogits = np.asarray(dlogits, dtype=float)
        if dlogits.ndim == 2:
            dlogits = dlogits[None]
        grads: dict = {}

        def store(mname, glist):
            for (pname, _), g in zip(self.mlps[mname].params(), glist):
                grads[f"{mname}.{pname}"] = g

        dR, g = self.mlps["aff"].backward(dlogits[..., None], cache.aff_cache)
        store("aff", g)
        dR = dR[..., 0]

        dalpha = np.stack([dR * cache.residuals[ch] for ch in CHANNELS], axis=-1)
        dA, dB, g = self.mlps["alpha"].backward_pair(dalpha, cache.alpha_cache)
        store("alpha", g)

        d_hats = {}
        offset = 0
        for ch in WEIGHT_INPUT_CHANNELS:
            width = cfg.channel_dim(ch)
            d_hats[ch] = (dA[..., offset : offset + width], dB[..., offset : offset + width])
            offset += width

        for k, ch in enumerate(CHANNELS):
            dres = (dR * cache.alpha[..., k])[..., None]
            d_prev_hat, d_curr_hat, g = self.mlps[f"residual_{ch}"].backward_pair(dres, cache.residual_caches[ch])
            store(f"residual_{ch}", g)
            if ch in d_hats:
                d_prev_hat = d_prev_hat + d_hats[ch][0]
                d_curr_hat = d_curr_hat + d_hats[ch][1]
            anchor_grads = {
                "fp": d_prev_hat[:, n],
                "nb": d_prev_hat[:, n + 1],
                "dt": d_curr_hat[:, n],
                "fn": d_curr_hat[:, n + 1],
            }
            for kind in ANCHORS:
                mname = f"anchor_{kind}_{ch}"
                _, g = self.mlps[mname].backward(anchor_grads[kind], cache.anchor_caches[(ch, kind)])
                store(mname, g)
        return grads

    def loss_and_grad(self, bundle: FeatureBundle, gt: GtAffinityPair):
        logits, cache = self.forward(bundle)
        loss, dlogits = log_affinity_loss_grad(logits, gt, bundle.n_prev, bundle.n_curr)
        return loss, self.backward(dlogits, cache)

    def batch_loss_and_grad(self, examples):
        """Per-example losses and the gradient of their mean."""
        bundles = [b for b, _ in examples]
        logits, cache = self.forward_batch(bundles)
        losses = []
        dlogits = np.empty_like(logits)
        for k, (b, gt) in enumerate(examples):
            loss, dl = log_affinity_loss_grad(logits[k], gt, b.n_prev, b.n_curr)
            losses.append(loss)
            dlogits[k] = dl / len(examples)
        return losses, self.backward(dlogits, cache)

    def loss(self, bundle: FeatureBundle, gt: GtAffinityPair) -> float:
        logits = self.logits(bundle)
        return log_affinity_loss_grad(logits, gt, bundle.n_prev, bundle.n_curr)[0]
