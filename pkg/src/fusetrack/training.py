"""Deterministic mini-batch gradient descent with momentum."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from .network import NetConfig, ResidualNet

logger = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Raised when training produces a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 100
    batch_size: int = 8

    def to_dict(self) -> dict:
        return asdict(self)


def train(
    dataset: Sequence[tuple],
    config: Optional[TrainConfig] = None,
    net: Optional[ResidualNet] = None,
    net_config: Optional[NetConfig] = None,
):
    """Fit a :class:`ResidualNet` to ``(FeatureBundle, GtAffinityPair)`` pairs.

    Batches are taken in dataset order; the batch gradient is the mean of the
    per-example gradients from one stacked pass. Returns the network
    and the per-epoch mean loss (losses measured during each epoch's passes).
    """
    if len(dataset) == 0:
        raise ValueError("empty training set")
    config = config or TrainConfig()
    if net is None:
        net = ResidualNet(net_config or NetConfig(n_max=dataset[0][0].n_max))
    params = net.parameters()
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    curve = []
    for epoch in range(config.epochs):
        epoch_losses = []
        for start in range(0, len(dataset), config.batch_size):
            batch = dataset[start : start + config.batch_size]
            losses, grads = net.batch_loss_and_grad(batch)
            for offset, loss in enumerate(losses):
                if not math.isfinite(loss):
                    raise NumericalError(f"non-finite loss {loss} at epoch {epoch}, example {start + offset}")
            epoch_losses.extend(losses)
            for k, p in params.items():
                g = grads[k]
                if not np.all(np.isfinite(g)):
                    raise NumericalError(f"non-finite gradient for {k} at epoch {epoch}")
                velocity[k] *= config.momentum
                velocity[k] += g
                p -= config.lr * velocity[k]
            net.mark_updated()
        curve.append(float(np.mean(epoch_losses)))
        logger.debug("epoch %d mean loss %.6f", epoch, curve[-1])
    return net, curve
