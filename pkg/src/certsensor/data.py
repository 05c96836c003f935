"""Synthetic injector dataset, CSV I/O and output range bins.

The generator is a surrogate for a proprietary engine dataset: each example is a time series of
``K - 1`` readings of a pulse-shaped signal whose amplitude and width grow with the target, plus
one scalar sensor reading that is affine in the target. The series only pins the target down in
aggregate over many readings; the scalar is precise relative to its own noise bound. Everything is
normalized to ``[0, 1]`` and the target is floored at ``y_min`` so relative errors stay finite.

CSV layout: header ``s_0,...,s_{K-2},p,y``, one example per row, floats written with 17
significant digits. Generator parameters are stored in a ``<stem>.meta.json`` sidecar.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .artifacts import atomic_write, write_text
from .errors import ConfigurationError, DatasetParseError, DomainError

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "pulse-v2"

# Pulse shape: baseline + amplitude(y) * gaussian((t - center) / width(y))
_BASELINE = 0.05
_CENTER = 0.4
_AMPLITUDE = (0.15, 0.6)
_WIDTH = (0.08, 0.2)
_SCALAR = (0.2, 0.6)

BIN_EDGES: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
BIN_LABELS: tuple[str, ...] = (
    "[0.0-0.2)",
    "[0.2-0.4)",
    "[0.4-0.6)",
    "[0.6-0.8)",
    "[0.8-1.0]",
    "[0.0-1.0]",
)
FULL_RANGE = len(BIN_LABELS) - 1


class DatasetMeta(BaseModel):
    seed: int | None = None
    input_dim: int
    n: int
    generator_version: str = "external"
    y_min: float | None = None
    noise_sigma: float | None = None
    scalar_sigma: float | None = None


@dataclass(frozen=True, slots=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    meta: DatasetMeta

    def __len__(self) -> int:
        return int(self.Y.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.X.shape[1])

    def head(self, limit: int | None) -> Dataset:
        if limit is None or limit >= len(self):
            return self
        meta = self.meta.model_copy(update={"n": limit})
        return Dataset(self.X[:limit], self.Y[:limit], meta)

    def equals(self, other: Dataset) -> bool:
        return bool(np.array_equal(self.X, other.X) and np.array_equal(self.Y, other.Y))


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def generate(
    n: int,
    input_dim: int,
    seed: int,
    y_min: float = 0.05,
    noise_sigma: float = 0.005,
    scalar_sigma: float = 0.001,
) -> Dataset:
    """Draw ``n`` examples of dimension ``input_dim``; deterministic given ``seed``.

    ``noise_sigma`` is the reading noise of the series, ``scalar_sigma`` that of the scalar sensor.
    """

    if n < 1 or input_dim < 2:
        raise ConfigurationError(f"Need n >= 1 and K >= 2, got n={n}, K={input_dim}")
    if not 0.0 < y_min < 1.0:
        raise ConfigurationError(f"y_min must lie in (0, 1), got {y_min}")

    rng = np.random.default_rng(seed)
    y = rng.uniform(y_min, 1.0, size=n)

    t = np.linspace(0.0, 1.0, input_dim - 1)
    amplitude = _AMPLITUDE[0] + _AMPLITUDE[1] * y
    width = _WIDTH[0] + _WIDTH[1] * y
    pulse = np.exp(-0.5 * ((t[None, :] - _CENTER) / width[:, None]) ** 2)
    series = _BASELINE + amplitude[:, None] * pulse
    series += rng.normal(0.0, noise_sigma, size=series.shape)

    scalar = _SCALAR[0] + _SCALAR[1] * y + rng.normal(0.0, scalar_sigma, size=n)

    X = np.clip(np.column_stack([series, scalar]), 0.0, 1.0)
    meta = DatasetMeta(
        seed=seed,
        input_dim=input_dim,
        n=n,
        generator_version=GENERATOR_VERSION,
        y_min=y_min,
        noise_sigma=noise_sigma,
        scalar_sigma=scalar_sigma,
    )
    logger.debug("Generated %d examples with K=%d (seed=%d)", n, input_dim, seed)
    return Dataset(X=X, Y=y, meta=meta)


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def header_for(input_dim: int) -> list[str]:
    return [*(f"s_{i}" for i in range(input_dim - 1)), "p", "y"]


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.meta.json")


def save_csv(ds: Dataset, path: str | Path) -> Path:
    frame = pd.DataFrame(np.column_stack([ds.X, ds.Y]), columns=header_for(ds.input_dim))
    with atomic_write(path) as handle:
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")
    write_text(meta_path(path), ds.meta.model_dump_json(indent=1) + "\n")
    return Path(path)


_LINE_RE = re.compile(r"line (\d+)")


def _undecodable_row(path: str | Path) -> int | None:
    for number, line in enumerate(Path(path).read_bytes().splitlines()):
        try:
            line.decode("utf-8")
        except UnicodeDecodeError:
            return number
    return None


def load_csv(path: str | Path) -> Dataset:
    """Load a dataset CSV; malformed content raises :class:`DatasetParseError`.

    Rows are numbered from 1 after the header; header problems are reported as row 0. Blank lines
    count as rows and are reported as missing values.
    """

    source = str(path)
    try:
        raw = pd.read_csv(
            path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=False, encoding="utf-8"
        )
    except pd.errors.EmptyDataError as exc:
        raise DatasetParseError("file is empty", source=source, row=0) from exc
    except pd.errors.ParserError as exc:
        match = _LINE_RE.search(str(exc))
        row = int(match.group(1)) - 1 if match else None
        raise DatasetParseError("wrong number of columns", source=source, row=row) from exc
    except UnicodeDecodeError as exc:
        raise DatasetParseError("file is not valid UTF-8", source=source, row=_undecodable_row(path)) from exc

    header = [str(name).strip() for name in raw.iloc[0].tolist()]
    input_dim = len(header) - 1
    if input_dim < 2 or header != header_for(input_dim):
        raise DatasetParseError(
            f"unexpected header {','.join(header)!r}", source=source, row=0
        )

    body = raw.iloc[1:]
    numeric = body.apply(pd.to_numeric, errors="coerce") if len(body) else body
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.argmax(bad)) + 1
        raise DatasetParseError("missing or non-numeric value", source=source, row=row)

    # numpy's str -> float64 conversion is correctly rounded, so 17-digit values round-trip
    values = body.to_numpy(dtype=str).astype(np.float64).reshape(len(body), input_dim + 1)
    outside = ((values < 0.0) | (values > 1.0)).any(axis=1)
    if outside.any():
        row = int(np.argmax(outside)) + 1
        raise DatasetParseError("value outside the normalized range [0, 1]", source=source, row=row)

    X, Y = values[:, :-1], values[:, -1]
    sidecar = meta_path(path)
    if sidecar.is_file():
        meta = DatasetMeta.model_validate_json(sidecar.read_text(encoding="utf-8"))
    else:
        meta = DatasetMeta(input_dim=input_dim, n=len(Y))
    return Dataset(X=X, Y=Y, meta=meta)


# ---------------------------------------------------------------------------
# Range bins
# ---------------------------------------------------------------------------


def bins_of(Y: np.ndarray) -> np.ndarray:
    """Bin index (0..4) of every target; bins are left-closed, the last one is closed."""

    Y = np.asarray(Y, dtype=np.float64)
    if np.any(Y < 0.0) or np.any(Y > 1.0):
        raise DomainError("Targets must lie within [0, 1] to be binned")
    return np.searchsorted(np.asarray(BIN_EDGES), Y, side="right")


def bin_of(y: float) -> int:
    return int(bins_of(np.asarray([y]))[0])


__all__ = [
    "BIN_EDGES",
    "BIN_LABELS",
    "FULL_RANGE",
    "GENERATOR_VERSION",
    "Dataset",
    "DatasetMeta",
    "bin_of",
    "bins_of",
    "generate",
    "header_for",
    "load_csv",
    "meta_path",
    "save_csv",
]
