"""Single hidden layer ReLU regression network.

``f(x) = w2 · ReLU(W1 x + b1) + b2`` with ``W1`` of shape ``(m, K)``. Instances are immutable:
training works on its own parameter arrays and freezes them into a :class:`DenseNet` at the end,
so a trained network can be shared read-only between evaluation workers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .artifacts import write_text
from .errors import EmptyBatchError, InputShapeError, ShapeError

logger = logging.getLogger(__name__)


def _frozen_array(value: Any, shape: tuple[int, ...], name: str) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    if array.shape != shape:
        raise ShapeError(f"{name} has shape {array.shape}, expected {shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, slots=True, eq=False)
class DenseNet:
    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def __post_init__(self) -> None:
        W1 = np.array(self.W1, dtype=np.float64)
        if W1.ndim != 2 or 0 in W1.shape:
            raise ShapeError(f"W1 must be a non-empty matrix, got shape {W1.shape}")
        m, k = W1.shape
        object.__setattr__(self, "W1", _frozen_array(W1, (m, k), "W1"))
        object.__setattr__(self, "b1", _frozen_array(self.b1, (m,), "b1"))
        object.__setattr__(self, "w2", _frozen_array(self.w2, (m,), "w2"))
        object.__setattr__(self, "b2", float(self.b2))

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @classmethod
    def initialize(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> DenseNet:
        """Draw every parameter uniformly in ``±1/sqrt(fan_in)``."""

        bound_in = 1.0 / np.sqrt(input_dim)
        bound_hidden = 1.0 / np.sqrt(hidden_dim)
        return cls(
            W1=rng.uniform(-bound_in, bound_in, size=(hidden_dim, input_dim)),
            b1=rng.uniform(-bound_in, bound_in, size=hidden_dim),
            w2=rng.uniform(-bound_hidden, bound_hidden, size=hidden_dim),
            b2=float(rng.uniform(-bound_hidden, bound_hidden)),
        )

    @classmethod
    def constant(cls, input_dim: int, hidden_dim: int, value: float) -> DenseNet:
        return cls(
            W1=np.zeros((hidden_dim, input_dim)),
            b1=np.zeros(hidden_dim),
            w2=np.zeros(hidden_dim),
            b2=value,
        )

    @property
    def input_dim(self) -> int:
        return int(self.W1.shape[1])

    @property
    def hidden_dim(self) -> int:
        return int(self.W1.shape[0])

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def _check_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise InputShapeError(
                f"Expected inputs of shape (n, {self.input_dim}), got {X.shape}"
            )
        return X

    def preactivation(self, X: np.ndarray) -> np.ndarray:
        X = self._check_batch(X)
        return X @ self.W1.T + self.b1

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Batched forward pass over the rows of ``X``."""

        hidden = np.maximum(self.preactivation(X), 0.0)
        return hidden @ self.w2 + self.b2

    def forward(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise InputShapeError(f"Expected an input of length {self.input_dim}, got {x.shape}")
        return float(self.predict(x[None, :])[0])

    def input_gradient(self, X: np.ndarray) -> np.ndarray:
        """Return ``∇_x f`` for every row of ``X`` (ReLU derivative taken as 0 at 0)."""

        active = self.preactivation(X) > 0.0
        return (active * self.w2) @ self.W1

    # ------------------------------------------------------------------
    # Flat parameter view (finite differences, optimizer)
    # ------------------------------------------------------------------

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    @classmethod
    def from_vector(cls, vector: np.ndarray, input_dim: int, hidden_dim: int) -> DenseNet:
        vector = np.asarray(vector, dtype=np.float64)
        expected = hidden_dim * input_dim + 2 * hidden_dim + 1
        if vector.shape != (expected,):
            raise ShapeError(f"Parameter vector has shape {vector.shape}, expected ({expected},)")
        split = hidden_dim * input_dim
        return cls(
            W1=vector[:split].reshape(hidden_dim, input_dim),
            b1=vector[split : split + hidden_dim],
            w2=vector[split + hidden_dim : split + 2 * hidden_dim],
            b2=float(vector[-1]),
        )

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.to_vector()).all())


def forward(net: DenseNet, x: np.ndarray) -> float:
    return net.forward(x)


def predict(net: DenseNet, X: np.ndarray) -> np.ndarray:
    return net.predict(X)


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class Gradients:
    """Gradients of a scalar loss with respect to every network parameter."""

    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    @classmethod
    def zeros_like(cls, net: DenseNet) -> Gradients:
        return cls(
            W1=np.zeros_like(net.W1),
            b1=np.zeros_like(net.b1),
            w2=np.zeros_like(net.w2),
            b2=0.0,
        )

    def scaled(self, factor: float) -> Gradients:
        return Gradients(self.W1 * factor, self.b1 * factor, self.w2 * factor, self.b2 * factor)

    def __add__(self, other: Gradients) -> Gradients:
        return Gradients(
            self.W1 + other.W1,
            self.b1 + other.b1,
            self.w2 + other.w2,
            self.b2 + other.b2,
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])


def mse_gradients(net: DenseNet, X: np.ndarray, Y: np.ndarray) -> tuple[float, Gradients]:
    """Mean squared error over the batch and its exact gradient."""

    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape[0] == 0:
        raise EmptyBatchError("Cannot compute a loss over an empty batch")
    X = net._check_batch(X)
    if Y.shape != (X.shape[0],):
        raise InputShapeError(f"Targets have shape {Y.shape}, expected ({X.shape[0]},)")

    pre = X @ net.W1.T + net.b1
    hidden = np.maximum(pre, 0.0)
    residual = hidden @ net.w2 + net.b2 - Y
    loss = float(np.mean(residual**2))

    d_out = 2.0 * residual / Y.shape[0]
    d_pre = np.outer(d_out, net.w2) * (pre > 0.0)
    grads = Gradients(
        W1=d_pre.T @ X,
        b1=d_pre.sum(axis=0),
        w2=hidden.T @ d_out,
        b2=float(d_out.sum()),
    )
    return loss, grads


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


class ModelMeta(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="allow")

    mode: str = "standard"
    seed: int = 0
    eps_series: float = 0.0
    eps_scalar: float = 0.0
    lambda_: float = Field(default=1.0, alias="lambda")


class ModelDocument(BaseModel):
    input_dim: int = Field(ge=1)
    hidden_dim: int = Field(ge=1)
    W1: list[list[float]]
    b1: list[float]
    w2: list[float]
    b2: float
    meta: ModelMeta = Field(default_factory=ModelMeta)

    @model_validator(mode="after")
    def _check_shapes(self) -> ModelDocument:
        m, k = self.hidden_dim, self.input_dim
        if len(self.W1) != m or any(len(row) != k for row in self.W1):
            raise ValueError(f"W1 must be a {m}x{k} matrix")
        if len(self.b1) != m or len(self.w2) != m:
            raise ValueError(f"b1 and w2 must have length {m}")
        return self


def save_model(net: DenseNet, path: str | Path, meta: ModelMeta | None = None) -> Path:
    document = ModelDocument(
        input_dim=net.input_dim,
        hidden_dim=net.hidden_dim,
        W1=net.W1.tolist(),
        b1=net.b1.tolist(),
        w2=net.w2.tolist(),
        b2=net.b2,
        meta=meta or ModelMeta(),
    )
    # json writes floats with repr(), the shortest string that round-trips exactly
    text = json.dumps(document.model_dump(by_alias=True), indent=1)
    logger.debug("Saving %dx%d network to %s", net.hidden_dim, net.input_dim, path)
    return write_text(path, text + "\n")


def load_model(path: str | Path) -> tuple[DenseNet, ModelMeta]:
    document = ModelDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    net = DenseNet(W1=document.W1, b1=document.b1, w2=document.w2, b2=document.b2)
    if not net.is_finite():
        raise ShapeError(f"Model file '{path}' contains non-finite weights")
    return net, document.meta


__all__ = [
    "DenseNet",
    "Gradients",
    "ModelDocument",
    "ModelMeta",
    "forward",
    "load_model",
    "mse_gradients",
    "predict",
    "save_model",
]
