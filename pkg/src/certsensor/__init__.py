"""Top level package for certsensor."""

from __future__ import annotations

from importlib import metadata

from .bounds import BoundPair, dual_output_bounds
from .losses import backward, get_loss, iter_losses, registry
from .milp import Certificate, exact_output_bounds, verify_dataset
from .network import DenseNet, forward, predict
from .perturb import Box, box_of
from .schema import PerturbationSpec, RunConfig, TrainConfig
from .training import train

try:
    __version__ = metadata.version("certsensor")
except metadata.PackageNotFoundError:  # pragma: no cover - used in editable installs
    __version__ = "0.0.0"

__all__ = [
    "__version__",
    "BoundPair",
    "Box",
    "Certificate",
    "DenseNet",
    "PerturbationSpec",
    "RunConfig",
    "TrainConfig",
    "backward",
    "box_of",
    "dual_output_bounds",
    "exact_output_bounds",
    "forward",
    "get_loss",
    "iter_losses",
    "predict",
    "registry",
    "train",
    "verify_dataset",
]
