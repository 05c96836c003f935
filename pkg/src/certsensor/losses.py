"""Training objectives and their registry.

Each objective maps a :class:`Batch` to ``(loss, gradients)``. Objectives are registered by name
(``mse``, ``robust_mse``, ``targeted``) the same way matchers are looked up from a check kind, so
the trainer only needs the name stored in its configuration.
"""

from __future__ import annotations

import re
from abc import ABC, abstractmethod
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from typing import Any, ClassVar

import numpy as np

from .bounds import robust_mse_grad
from .errors import EmptyBatchError
from .network import DenseNet, Gradients, mse_gradients

__all__ = [
    "Batch",
    "Loss",
    "LossRegistry",
    "MeanSquaredError",
    "RobustMeanSquaredError",
    "TargetedLoss",
    "backward",
    "get_loss",
    "iter_losses",
    "registry",
]


def _camel_to_snake(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()


@dataclass(slots=True)
class Batch:
    """Inputs, targets and (optionally) the admissible box of every input."""

    X: np.ndarray
    Y: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __len__(self) -> int:
        return int(np.shape(self.Y)[0])

    @property
    def is_point(self) -> bool:
        return self.lo is None or self.hi is None or bool(np.array_equal(self.lo, self.hi))

    def subset(self, mask: np.ndarray) -> Batch:
        return Batch(
            X=self.X[mask],
            Y=self.Y[mask],
            lo=None if self.lo is None else self.lo[mask],
            hi=None if self.hi is None else self.hi[mask],
        )


class Loss(ABC):
    """Base objective interface."""

    registry_name: ClassVar[str | None] = None

    @classmethod
    def name(cls) -> str:
        if cls.registry_name:
            return cls.registry_name
        return _camel_to_snake(cls.__name__)

    def __call__(self, net: DenseNet, batch: Batch) -> tuple[float, Gradients]:
        if len(batch) == 0:
            raise EmptyBatchError("Cannot compute a loss over an empty batch")
        return self._evaluate(net, batch)

    @abstractmethod
    def _evaluate(self, net: DenseNet, batch: Batch) -> tuple[float, Gradients]:
        """Return the mean loss over ``batch`` and its gradient."""


class MeanSquaredError(Loss):
    registry_name = "mse"

    def _evaluate(self, net: DenseNet, batch: Batch) -> tuple[float, Gradients]:
        return mse_gradients(net, batch.X, batch.Y)


class RobustMeanSquaredError(Loss):
    """``max((ℓ - y)², (u - y)²)`` averaged over the batch."""

    registry_name = "robust_mse"

    def _evaluate(self, net: DenseNet, batch: Batch) -> tuple[float, Gradients]:
        # point boxes give ℓ = u = f(x): the objective is the plain squared error
        if batch.is_point:
            return mse_gradients(net, batch.X, batch.Y)
        return robust_mse_grad(net, batch.lo, batch.hi, batch.Y)


class TargetedLoss(Loss):
    """``λ·MSE(batch) + (1 - λ)·robustMSE(examples whose target lies in the range)``."""

    registry_name = "targeted"

    def __init__(self, lambda_: float = 0.8, target_range: tuple[float, float] = (0.6, 1.0)) -> None:
        self.lambda_ = float(lambda_)
        self.target_range = (float(target_range[0]), float(target_range[1]))
        self._mse = MeanSquaredError()
        self._robust = RobustMeanSquaredError()

    def in_range(self, Y: np.ndarray) -> np.ndarray:
        lo, hi = self.target_range
        return (Y >= lo) & (Y <= hi)

    def _evaluate(self, net: DenseNet, batch: Batch) -> tuple[float, Gradients]:
        loss, grads = self._mse(net, batch)
        if self.lambda_ == 1.0:
            return loss, grads
        loss, grads = self.lambda_ * loss, grads.scaled(self.lambda_)
        mask = self.in_range(np.asarray(batch.Y))
        if mask.any():
            robust_loss, robust_grads = self._robust(net, batch.subset(mask))
            loss += (1.0 - self.lambda_) * robust_loss
            grads = grads + robust_grads.scaled(1.0 - self.lambda_)
        return loss, grads


class LossRegistry(Mapping[str, type[Loss]]):
    """Registry of available objective classes."""

    def __init__(self) -> None:
        self._storage: dict[str, type[Loss]] = {}

    def __getitem__(self, key: str) -> type[Loss]:
        return self._storage[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._storage)

    def __len__(self) -> int:
        return len(self._storage)

    def register(self, loss_cls: type[Loss], *, name: str | None = None) -> None:
        if not issubclass(loss_cls, Loss):
            raise TypeError("Only Loss subclasses can be registered")
        key = name or loss_cls.name()
        if key in self._storage:
            raise TypeError(f"Loss '{key}' is already registered")
        self._storage[key] = loss_cls

    def create(self, name: str, /, **kwargs: Any) -> Loss:
        try:
            loss_cls = self._storage[name]
        except KeyError as exc:
            raise KeyError(f"Unknown loss '{name}'") from exc
        return loss_cls(**kwargs)


registry = LossRegistry()


def get_loss(name: str) -> type[Loss]:
    return registry[name]


def iter_losses() -> Iterator[tuple[str, type[Loss]]]:
    yield from registry.items()


def backward(
    net: DenseNet,
    X: np.ndarray,
    Y: np.ndarray,
    loss: str = "mse",
    *,
    lo: np.ndarray | None = None,
    hi: np.ndarray | None = None,
    **options: Any,
) -> Gradients:
    """Exact gradient of the named mean loss over ``(X, Y)``."""

    objective = registry.create(loss, **options)
    _, grads = objective(net, Batch(np.asarray(X, dtype=np.float64), np.asarray(Y, dtype=np.float64), lo, hi))
    return grads


for builtin in (MeanSquaredError, RobustMeanSquaredError, TargetedLoss):
    registry.register(builtin)
