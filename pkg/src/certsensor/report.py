"""Per-range evaluation tables and plot-ready data files.

Every table holds five error rows (clean relative error, random noise error, PGD error, MILP
bound, dual bound) for the five output-range bins plus the full range. Values are stored as
fractions; the markdown rendering shows percentages with two decimals while ``report.csv`` keeps
full precision and reloads to the same table. An empty bin is absent (NaN), never zero.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .artifacts import atomic_write, write_text
from .attack import noise_errors, pgd_dataset
from .data import BIN_LABELS, FULL_RANGE, Dataset, bins_of
from .errors import ConfigurationError, DivisionDomainError, DomainError
from .milp import Certificate
from .network import DenseNet
from .perturb import Box, contains
from .schema import AttackConfig, PerturbationSpec, ReportConfig

logger = logging.getLogger(__name__)

METRICS: tuple[str, ...] = ("relative_error", "noise_error", "pgd_error", "milp_bound", "dual_bound")
METRIC_LABELS: dict[str, str] = {
    "relative_error": "Relative error",
    "noise_error": "Noise error",
    "pgd_error": "PGD error",
    "milp_bound": "MILP bound",
    "dual_bound": "Dual bound",
}
COUNT_ROW = "count"


@dataclass(slots=True, eq=False)
class EvalTable:
    """Mean errors of one model: rows are :data:`METRICS`, columns are :data:`BIN_LABELS`."""

    model: str
    values: pd.DataFrame
    counts: pd.Series
    meta: dict[str, str] = field(default_factory=dict)

    def mean(self, metric: str, bin_index: int = FULL_RANGE) -> float:
        return float(self.values.loc[metric, BIN_LABELS[bin_index]])

    def equals(self, other: EvalTable) -> bool:
        return (
            self.model == other.model
            and self.values.equals(other.values)
            and self.counts.astype(int).equals(other.counts.astype(int))
        )


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _relative(pred: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if np.any(Y == 0):
        raise DivisionDomainError("Relative error is undefined for a zero target")
    return np.abs(pred - Y) / np.abs(Y)


def mre(net: DenseNet, examples: Dataset) -> float:
    """Mean relative error ``mean(|f(x) - y| / |y|)``."""

    if len(examples) == 0:
        raise DomainError("The mean relative error of an empty set is undefined")
    return float(np.mean(_relative(net.predict(examples.X), examples.Y)))


def _certificate_errors(certs: Sequence[Certificate], Y: np.ndarray, method: str) -> np.ndarray:
    if len(certs) != len(Y) or any(c.example_id != i for i, c in enumerate(certs)):
        raise ConfigurationError(f"The {method} certificates do not cover the test examples in order")
    if any(c.method != method for c in certs):
        raise ConfigurationError(f"Expected {method} certificates")
    return np.array([c.relative_error(float(y)) for c, y in zip(certs, Y, strict=True)])


def example_errors(
    net: DenseNet,
    test: Dataset,
    spec: PerturbationSpec,
    dual: Sequence[Certificate],
    milp: Sequence[Certificate],
    attack: AttackConfig,
    report: ReportConfig | None = None,
    *,
    seed: int = 0,
) -> pd.DataFrame:
    """One row per test example with every error measure."""

    report = report or ReportConfig()
    X, Y = test.X, test.Y
    prediction = net.predict(X)
    _, pgd = pgd_dataset(net, X, Y, spec, attack, seed)
    return pd.DataFrame(
        {
            "id": np.arange(len(Y)),
            "y": Y,
            "bin": bins_of(Y),
            "prediction": prediction,
            "relative_error": _relative(prediction, Y),
            "noise_error": noise_errors(net, X, Y, spec, report.noise_draws, seed),
            "pgd_error": pgd,
            "milp_bound": _certificate_errors(milp, Y, "milp"),
            "dual_bound": _certificate_errors(dual, Y, "dual"),
        }
    )


def summarize(errors: pd.DataFrame, model: str, meta: dict[str, str] | None = None) -> EvalTable:
    """Per-bin means of the per-example errors."""

    grouped = errors.groupby("bin")[list(METRICS)].mean()
    values = grouped.reindex(range(FULL_RANGE)).T
    values.columns = list(BIN_LABELS[:FULL_RANGE])
    values[BIN_LABELS[FULL_RANGE]] = errors[list(METRICS)].mean() if len(errors) else np.nan
    values = values.astype(np.float64)
    values.index.name = "metric"

    counts = errors.groupby("bin").size().reindex(range(FULL_RANGE), fill_value=0)
    counts.index = list(BIN_LABELS[:FULL_RANGE])
    counts[BIN_LABELS[FULL_RANGE]] = len(errors)
    return EvalTable(model=model, values=values, counts=counts.astype(int), meta=dict(meta or {}))


def build_table(
    net: DenseNet,
    test: Dataset,
    spec: PerturbationSpec,
    dual: Sequence[Certificate],
    milp: Sequence[Certificate],
    attack: AttackConfig,
    report: ReportConfig | None = None,
    *,
    seed: int = 0,
    model: str = "model",
    meta: dict[str, str] | None = None,
) -> EvalTable:
    errors = example_errors(net, test, spec, dual, milp, attack, report, seed=seed)
    return summarize(errors, model, meta)


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------


def combine_tables(tables: EvalTable | Sequence[EvalTable]) -> pd.DataFrame:
    """Stack tables into the long layout of ``report.csv`` (one block per model)."""

    if isinstance(tables, EvalTable):
        tables = [tables]
    blocks = []
    for table in tables:
        block = table.values.copy()
        block.loc[COUNT_ROW] = table.counts.astype(np.float64)
        block = block.rename_axis("metric").reset_index()
        block.insert(0, "model", table.model)
        blocks.append(block)
    if not blocks:
        return pd.DataFrame(columns=["model", "metric", *BIN_LABELS])
    return pd.concat(blocks, ignore_index=True)


def _percent(value: float) -> str:
    return "n/a" if np.isnan(value) else f"{100.0 * value:.2f}%"


def to_markdown(tables: Sequence[EvalTable]) -> str:
    header = ["Model", "Metric", *BIN_LABELS]
    rows: list[list[str]] = []
    for table in tables:
        rows.append([table.model, "Examples", *(str(int(n)) for n in table.counts)])
        for metric in METRICS:
            row = table.values.loc[metric]
            rows.append([table.model, METRIC_LABELS[metric], *(_percent(v) for v in row)])

    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]

    def line(cells: list[str]) -> str:
        padded = [c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths, strict=True))]
        return "| " + " | ".join(padded) + " |"

    rule = "|" + "|".join("-" * (w + 1) + (":" if i >= 2 else "-") for i, w in enumerate(widths)) + "|"
    return "\n".join([line(header), rule, *(line(r) for r in rows)]) + "\n"


def emit_report(tables: EvalTable | Sequence[EvalTable], out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``report.md`` and ``report.csv`` into ``out_dir``."""

    if isinstance(tables, EvalTable):
        tables = [tables]
    out_dir = Path(out_dir)
    markdown = write_text(out_dir / "report.md", to_markdown(tables))
    csv_path = out_dir / "report.csv"
    with atomic_write(csv_path) as handle:
        combine_tables(tables).to_csv(
            handle, index=False, float_format="%.17g", na_rep="", lineterminator="\n"
        )
    logger.info("Report written to %s", out_dir)
    return markdown, csv_path


def load_report(path: str | Path) -> list[EvalTable]:
    frame = pd.read_csv(path, float_precision="round_trip", keep_default_na=True)
    tables = []
    for model, block in frame.groupby("model", sort=False):
        block = block.set_index("metric")[list(BIN_LABELS)]
        values = block.loc[list(METRICS)].astype(np.float64)
        values.index.name = "metric"
        values.columns = list(BIN_LABELS)
        counts = block.loc[COUNT_ROW].astype(int)
        counts.name = None
        tables.append(EvalTable(model=str(model), values=values, counts=counts))
    return tables


def render_table(tables: EvalTable | Sequence[EvalTable], console: Console | None = None) -> None:
    if isinstance(tables, EvalTable):
        tables = [tables]
    console = console or Console()
    grid = Table(title="Mean relative error by output range")
    grid.add_column("Model")
    grid.add_column("Metric")
    for label in BIN_LABELS:
        grid.add_column(label, justify="right")
    for table in tables:
        grid.add_row(table.model, "Examples", *(str(int(n)) for n in table.counts))
        for metric in METRICS:
            grid.add_row("", METRIC_LABELS[metric], *(_percent(v) for v in table.values.loc[metric]))
        grid.add_section()
    console.print(grid)


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def emit_scatter(
    net: DenseNet,
    examples: Dataset,
    path: str | Path,
    margin_tolerance: float = 0.01,
) -> Path:
    """``(id, y, prediction, relative_error, margin, within_margin)`` for every example.

    ``margin = margin_tolerance / y`` is the relative error that an absolute error of
    ``margin_tolerance`` represents at ``y``.
    """

    prediction = net.predict(examples.X) if len(examples) else np.zeros(0)
    error = _relative(prediction, examples.Y)
    margin = margin_tolerance / examples.Y
    frame = pd.DataFrame(
        {
            "id": np.arange(len(examples)),
            "y": examples.Y,
            "prediction": prediction,
            "relative_error": error,
            "margin": margin,
            "within_margin": error <= margin,
        }
    )
    with atomic_write(path) as handle:
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")
    return Path(path)


def emit_series(x: np.ndarray, z_star: np.ndarray, box: Box, path: str | Path) -> Path:
    """Clean and perturbed time series with the allowed band, one row per reading."""

    x = np.asarray(x, dtype=np.float64)
    z_star = np.asarray(z_star, dtype=np.float64)
    if not contains(box, x) or not contains(box, z_star):
        raise DomainError("Both the clean and the perturbed input must lie in the box")
    readings = box.dim - 1
    frame = pd.DataFrame(
        {
            "t": np.arange(readings),
            "clean": x[:readings],
            "perturbed": z_star[:readings],
            "band_lo": box.lo[:readings],
            "band_hi": box.hi[:readings],
        }
    )
    with atomic_write(path) as handle:
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")
    return Path(path)


__all__ = [
    "COUNT_ROW",
    "METRICS",
    "METRIC_LABELS",
    "EvalTable",
    "build_table",
    "combine_tables",
    "emit_report",
    "emit_scatter",
    "emit_series",
    "example_errors",
    "load_report",
    "mre",
    "render_table",
    "summarize",
    "to_markdown",
]
