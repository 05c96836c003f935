"""Minibatch SGD with heavy-ball momentum and a single triangular learning-rate cycle."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, TrainingDivergedError
from .losses import Batch, Loss, TargetedLoss, registry
from .network import DenseNet
from .perturb import boxes_of, scaled
from .schema import PerturbationSpec, TrainConfig

logger = logging.getLogger(__name__)

_LOSS_OF_MODE = {
    "standard": "mse",
    "noise": "mse",
    "robust": "robust_mse",
    "targeted": "targeted",
}


@dataclass(slots=True)
class TrainHistory:
    """Mean training loss of every epoch, in order."""

    losses: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def first(self) -> float:
        return self.losses[0]

    @property
    def last(self) -> float:
        return self.losses[-1]


def cyclic_lr(epoch: int, cfg: TrainConfig) -> float:
    """Linear ramp ``0 -> lr_peak`` until ``lr_peak_epoch`` then linear decay to 0 at ``epochs``."""

    if epoch <= cfg.lr_peak_epoch:
        if cfg.lr_peak_epoch == 0:
            return cfg.lr_peak
        return cfg.lr_peak * epoch / cfg.lr_peak_epoch
    return cfg.lr_peak * (cfg.epochs - epoch) / (cfg.epochs - cfg.lr_peak_epoch)


def eps_ramp(epoch: int, cfg: TrainConfig) -> float:
    if cfg.eps_ramp_epochs == 0:
        return 1.0
    return min(1.0, epoch / cfg.eps_ramp_epochs)


def _objective(cfg: TrainConfig) -> Loss:
    name = _LOSS_OF_MODE[cfg.mode]
    if name == "targeted":
        return registry.create(name, lambda_=cfg.lambda_, target_range=cfg.target_range)
    return registry.create(name)


def _noisy_inputs(X: np.ndarray, spec: PerturbationSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = boxes_of(spec, X)
    noisy = lo + (hi - lo) * rng.random(X.shape)
    return np.minimum(np.maximum(noisy, lo), hi)


def train(
    data: Dataset,
    cfg: TrainConfig,
    spec: PerturbationSpec,
    history: TrainHistory | None = None,
) -> DenseNet:
    """Train a network on ``data`` with the objective selected by ``cfg.mode``.

    ``history``, when given, receives the mean loss of every epoch. The run is fully determined by
    ``cfg.seed``: initialization, shuffling and noise draws all come from one generator.
    """

    X = np.asarray(data.X, dtype=np.float64)
    Y = np.asarray(data.Y, dtype=np.float64)
    if len(Y) == 0:
        raise ConfigurationError("Cannot train on an empty dataset")
    # validates the input range once for every mode
    boxes_of(spec, X)

    objective = _objective(cfg)
    if isinstance(objective, TargetedLoss) and not objective.in_range(Y).any():
        lo, hi = cfg.target_range
        raise ConfigurationError(f"No training example has a target within [{lo}, {hi}]")

    rng = np.random.default_rng(cfg.seed)
    net = DenseNet.initialize(data.input_dim, cfg.hidden_dim, rng)
    W1, b1, w2, b2 = (np.array(net.W1), np.array(net.b1), np.array(net.w2), net.b2)
    velocity = [np.zeros_like(W1), np.zeros_like(b1), np.zeros_like(w2), 0.0]

    uses_boxes = cfg.mode in ("robust", "targeted")
    n = len(Y)
    logger.info(
        "Training %s model: n=%d, K=%d, m=%d, %d epochs",
        cfg.mode, n, data.input_dim, cfg.hidden_dim, cfg.epochs,
    )

    for epoch in range(cfg.epochs):
        lr = cyclic_lr(epoch, cfg)
        epoch_spec = scaled(spec, eps_ramp(epoch, cfg)) if uses_boxes else spec
        inputs = _noisy_inputs(X, spec, rng) if cfg.mode == "noise" else X
        order = rng.permutation(n)
        total = 0.0

        for step, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            Xb = inputs[idx]
            lo = hi = None
            if uses_boxes:
                lo, hi = boxes_of(epoch_spec, Xb)
            net = DenseNet(W1, b1, w2, b2)
            loss, grads = objective(net, Batch(Xb, Y[idx], lo, hi))
            total += loss * len(idx)

            velocity[0] = cfg.momentum * velocity[0] - lr * grads.W1
            velocity[1] = cfg.momentum * velocity[1] - lr * grads.b1
            velocity[2] = cfg.momentum * velocity[2] - lr * grads.w2
            velocity[3] = cfg.momentum * velocity[3] - lr * grads.b2
            W1 = W1 + velocity[0]
            b1 = b1 + velocity[1]
            w2 = w2 + velocity[2]
            b2 = b2 + velocity[3]

            if not (
                np.isfinite(W1).all()
                and np.isfinite(b1).all()
                and np.isfinite(w2).all()
                and np.isfinite(b2)
            ):
                raise TrainingDivergedError(epoch, step)

        mean_loss = total / n
        if history is not None:
            history.losses.append(mean_loss)
        logger.debug("epoch %d: lr=%.5f loss=%.6g", epoch, lr, mean_loss)
        if (epoch + 1) % 100 == 0 or epoch + 1 == cfg.epochs:
            logger.info("epoch %d/%d: loss=%.6g", epoch + 1, cfg.epochs, mean_loss)

    return DenseNet(W1, b1, w2, b2)


__all__ = ["TrainHistory", "cyclic_lr", "eps_ramp", "train"]
