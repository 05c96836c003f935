"""Command line interface for certsensor."""

from __future__ import annotations

import contextlib
import logging
import sys
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any

import click
import numpy as np
import pandas as pd
import typer
import yaml
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from . import __version__
from .artifacts import atomic_write, write_text
from .attack import pgd_attack, pgd_dataset
from .data import Dataset, generate, load_csv, save_csv
from .errors import CertSensorError, ConfigurationError
from .loader import ConfigSyntaxError, load_file, locate_config_file
from .merge import merge_overrides
from .milp import Certificate, read_certificates, verify_dataset, write_certificates
from .network import DenseNet, ModelMeta, load_model, save_model
from .perturb import box_of
from .report import EvalTable, emit_report, emit_scatter, emit_series, example_errors, render_table, summarize
from .schema import TRAIN_MODES, RunConfig, normalize_config
from .training import TrainHistory, train

console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger(__name__)

CONFIG_ECHO = "run-config.yaml"
CONFIG_ECHO_SUFFIX = ".run-config.yaml"


@dataclass(slots=True)
class CLIState:
    """Runtime configuration shared across commands."""

    verbosity: int = 0


app = typer.Typer(
    add_completion=False,
    help="Train, attack and certify ReLU virtual sensors under bounded sensor noise.",
)


def _version_callback(value: bool) -> None:
    if value:
        console.print(__version__)
        raise typer.Exit()


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG

    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


@app.callback()
def main(
    ctx: typer.Context,
    verbose: int = typer.Option(
        0,
        "-v",
        "--verbose",
        count=True,
        help="Increase verbosity (-v for progress, -vv for debug details).",
    ),
    version: bool = typer.Option(
        False, "--version", help="Show the certsensor version and exit.", callback=_version_callback, is_eager=True
    ),
) -> None:
    """Configure the CLI before dispatching to a sub-command."""

    _ = version  # handled eagerly by the callback

    ctx.obj = CLIState(verbosity=verbose)
    _configure_logging(verbose)


# ---------------------------------------------------------------------------
# Shared options
# ---------------------------------------------------------------------------

ConfigOption = Annotated[
    Path | None, typer.Option("--config", "-c", help="TOML, YAML or JSON run configuration.")
]
SeedOption = Annotated[int | None, typer.Option("--seed", min=0, help="Master seed (data and training).")]
OutDirOption = Annotated[Path | None, typer.Option("--out-dir", help="Root directory of the run outputs.")]
ModeOption = Annotated[str | None, typer.Option("--mode", help="standard, noise, robust or targeted.")]
EpsSeriesOption = Annotated[float | None, typer.Option("--eps-series", help="Noise bound of the time-series readings.")]
EpsScalarOption = Annotated[float | None, typer.Option("--eps-scalar", help="Noise bound of the scalar reading.")]
LambdaOption = Annotated[float | None, typer.Option("--lambda", help="Weight of the plain MSE in targeted training.")]
TargetLoOption = Annotated[float | None, typer.Option("--target-lo", help="Lower end of the targeted output range.")]
TargetHiOption = Annotated[float | None, typer.Option("--target-hi", help="Upper end of the targeted output range.")]
EpochsOption = Annotated[int | None, typer.Option("--epochs", min=1, help="Number of training epochs.")]
NTrainOption = Annotated[int | None, typer.Option("--n-train", min=1, help="Training set size.")]
NTestOption = Annotated[int | None, typer.Option("--n-test", min=1, help="Test set size.")]
StepsOption = Annotated[int | None, typer.Option("--pgd-steps", min=0, help="Number of PGD steps.")]
StepSeriesOption = Annotated[float | None, typer.Option("--pgd-step-series", help="PGD step of the series readings.")]
StepScalarOption = Annotated[float | None, typer.Option("--pgd-step-scalar", help="PGD step of the scalar reading.")]
RestartsOption = Annotated[int | None, typer.Option("--restarts", min=1, help="PGD restarts.")]
MethodOption = Annotated[str | None, typer.Option("--method", help="dual, milp or both.")]
LimitOption = Annotated[int | None, typer.Option("--limit", min=0, help="Only process the first N test examples.")]
WorkersOption = Annotated[int | None, typer.Option("--workers", min=1, help="Worker processes for verification.")]
ModelOption = Annotated[Path | None, typer.Option("--model", help="Model JSON file (default: <out-dir>/models/<mode>.json).")]
DataOption = Annotated[Path | None, typer.Option("--data", help="Dataset CSV (default: the run's test or train set).")]


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _one_line(exc: BaseException) -> str:
    if isinstance(exc, ValidationError):
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "config"
        return f"Invalid configuration: {location}: {first['msg']}"
    if isinstance(exc, ConfigSyntaxError):
        return exc.issues[0].to_message()
    return str(exc).splitlines()[0] if str(exc) else type(exc).__name__


@contextlib.contextmanager
def _diagnostics() -> Iterator[None]:
    """Map failures to exit codes: 1 for configuration problems, 2 for runtime failures."""

    try:
        yield
    except (ConfigurationError, ValidationError, ConfigSyntaxError) as exc:
        err_console.print(f"[red]Error:[/] {_one_line(exc)}", highlight=False)
        raise typer.Exit(code=1) from exc
    except (CertSensorError, OSError, ValueError) as exc:
        err_console.print(f"[red]Error:[/] {_one_line(exc)}", highlight=False)
        raise typer.Exit(code=2) from exc


def _resolve_config(config: Path | None, overrides: dict[str, Any]) -> RunConfig:
    document: Any = {}
    if config is not None:
        try:
            document = load_file(locate_config_file(config))
        except FileNotFoundError as exc:
            raise ConfigurationError(f"Could not read '{config}': {exc.strerror or exc}") from exc
        if document is not None and not isinstance(document, dict):
            raise ConfigurationError(f"'{config}' must contain a table at the top level")

    target = (overrides.pop("train.target_lo", None), overrides.pop("train.target_hi", None))
    merged = merge_overrides(document, overrides)
    if target != (None, None):
        current = normalize_config(merged).train.target_range
        lo = current[0] if target[0] is None else target[0]
        hi = current[1] if target[1] is None else target[1]
        merged = merge_overrides(merged, {"train.target_range": [lo, hi]})
    return normalize_config(merged)


def _echo_config(cfg: RunConfig, directory: Path) -> None:
    _write_echo(cfg, directory / CONFIG_ECHO)


def _echo_for(cfg: RunConfig, artifact: Path) -> None:
    """Write the resolved configuration next to ``artifact`` as ``<stem>.run-config.yaml``."""

    _write_echo(cfg, artifact.with_suffix(CONFIG_ECHO_SUFFIX))


def _write_echo(cfg: RunConfig, path: Path) -> None:
    write_text(path, yaml.safe_dump(cfg.dump(), sort_keys=False))


@dataclass(frozen=True, slots=True)
class RunLayout:
    """Where every artifact of a run lives under ``out_dir``."""

    root: Path

    @property
    def train_csv(self) -> Path:
        return self.root / "data" / "train.csv"

    @property
    def test_csv(self) -> Path:
        return self.root / "data" / "test.csv"

    def model(self, name: str) -> Path:
        return self.root / "models" / f"{name}.json"

    def attack(self, name: str) -> Path:
        return self.root / "attack" / f"{name}.csv"

    def certificates(self, name: str, method: str) -> Path:
        return self.root / "certs" / f"{name}.{method}.jsonl"

    def report_dir(self, name: str | None = None) -> Path:
        return self.root / "report" if name is None else self.root / "report" / name


def _dataset(path: Path | None, default: Path, limit: int | None = None) -> Dataset:
    ds = load_csv(path or default)
    return ds.head(limit)


def _model(path: Path | None, layout: RunLayout, cfg: RunConfig) -> tuple[str, DenseNet, ModelMeta]:
    path = path or layout.model(cfg.train.mode)
    net, meta = load_model(path)
    return path.stem, net, meta


def _train_one(cfg: RunConfig, data: Dataset, layout: RunLayout) -> tuple[DenseNet, Path]:
    history = TrainHistory()
    net = train(data, cfg.train, cfg.perturb, history)
    meta = ModelMeta(
        mode=cfg.train.mode,
        seed=cfg.train.seed,
        eps_series=cfg.perturb.eps_series,
        eps_scalar=cfg.perturb.eps_scalar,
        lambda_=cfg.train.lambda_,
    )
    path = save_model(net, layout.model(cfg.train.mode), meta)
    _echo_for(cfg, path)
    logger.info("Saved %s model to %s (final loss %.6g)", cfg.train.mode, path, history.last)
    return net, path


def _verify(cfg: RunConfig, net: DenseNet, test: Dataset, name: str, layout: RunLayout) -> dict[str, list[Certificate]]:
    results: dict[str, list[Certificate]] = {}
    for method in cfg.verify.methods:
        certs = verify_dataset(
            net,
            test,
            cfg.perturb,
            cfg.verify.tol,
            method=method,
            node_limit=cfg.verify.node_limit,
            attack=cfg.attack,
            workers=cfg.verify.workers,
            seed=cfg.seed,
        )
        path = write_certificates(layout.certificates(name, method), certs)
        _echo_for(cfg, path)
        results[method] = certs
    return results


def _write_attack(path: Path, net: DenseNet, test: Dataset, Z: np.ndarray, errors: np.ndarray) -> None:
    clean = net.predict(test.X) if len(test) else np.zeros(0)
    frame = pd.DataFrame(
        {
            "id": np.arange(len(test)),
            "y": test.Y,
            "prediction": clean,
            "relative_error": np.abs(clean - test.Y) / np.abs(test.Y),
            "pgd_prediction": net.predict(Z) if len(test) else np.zeros(0),
            "pgd_error": errors,
        }
    )
    with atomic_write(path) as handle:
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")


def _report_one(
    cfg: RunConfig,
    net: DenseNet,
    test: Dataset,
    certs: dict[str, list[Certificate]],
    name: str,
    directory: Path,
    scatter_name: str = "scatter.csv",
) -> tuple[EvalTable, int]:
    errors = example_errors(net, test, cfg.perturb, certs["dual"], certs["milp"], cfg.attack, cfg.report, seed=cfg.seed)
    table = summarize(errors, name, meta={"seed": str(cfg.seed)})
    emit_scatter(net, test, directory / scatter_name, cfg.report.margin_tolerance)
    increase = errors["pgd_error"] - errors["relative_error"]
    top = int(errors["id"].iloc[int(np.argmax(increase.to_numpy()))]) if len(errors) else -1
    return table, top


def _emit_top_series(cfg: RunConfig, net: DenseNet, test: Dataset, top: int, directory: Path) -> None:
    if top < 0:
        return
    x, y = test.X[top], float(test.Y[top])
    box = box_of(cfg.perturb, x)
    z_star, _ = pgd_attack(net, x, y, box, cfg.attack, np.random.default_rng([cfg.seed, top]))
    emit_series(x, z_star, box, directory / f"series_{top}.csv")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@app.command("gen-data")
def gen_data(
    config: ConfigOption = None,
    seed: SeedOption = None,
    n_train: NTrainOption = None,
    n_test: NTestOption = None,
    out_dir: OutDirOption = None,
) -> None:
    """Generate the synthetic train and test sets."""

    with _diagnostics():
        cfg = _resolve_config(
            config,
            {"seed": seed, "data.n_train": n_train, "data.n_test": n_test, "out_dir": _str(out_dir)},
        )
        layout = RunLayout(Path(cfg.out_dir))
        _generate(cfg, layout)
        _echo_config(cfg, layout.root / "data")
    console.print(f"[green]Datasets written to[/] {layout.train_csv.parent}")


def _generate(cfg: RunConfig, layout: RunLayout) -> tuple[Dataset, Dataset]:
    d = cfg.data
    # distinct streams for the two splits
    train_set = generate(d.n_train, d.input_dim, d.seed, d.y_min, d.noise_sigma, d.scalar_sigma)
    test_set = generate(d.n_test, d.input_dim, d.seed + 1, d.y_min, d.noise_sigma, d.scalar_sigma)
    save_csv(train_set, layout.train_csv)
    save_csv(test_set, layout.test_csv)
    return train_set, test_set


def _str(path: Path | None) -> str | None:
    return None if path is None else str(path)


@app.command("train")
def train_command(
    config: ConfigOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    eps_series: EpsSeriesOption = None,
    eps_scalar: EpsScalarOption = None,
    lambda_: LambdaOption = None,
    target_lo: TargetLoOption = None,
    target_hi: TargetHiOption = None,
    epochs: EpochsOption = None,
    data: DataOption = None,
    out_dir: OutDirOption = None,
) -> None:
    """Train one model and write it as JSON."""

    with _diagnostics():
        cfg = _resolve_config(
            config,
            {
                "seed": seed,
                "train.mode": mode,
                "perturb.eps_series": eps_series,
                "perturb.eps_scalar": eps_scalar,
                "train.lambda": lambda_,
                "train.target_lo": target_lo,
                "train.target_hi": target_hi,
                "train.epochs": epochs,
                "out_dir": _str(out_dir),
            },
        )
        layout = RunLayout(Path(cfg.out_dir))
        dataset = _dataset(data, layout.train_csv)
        _, path = _train_one(cfg, dataset, layout)
    console.print(f"[green]Model written to[/] {path}")


@app.command("attack")
def attack_command(
    config: ConfigOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    eps_series: EpsSeriesOption = None,
    eps_scalar: EpsScalarOption = None,
    pgd_steps: StepsOption = None,
    pgd_step_series: StepSeriesOption = None,
    pgd_step_scalar: StepScalarOption = None,
    restarts: RestartsOption = None,
    limit: LimitOption = None,
    model: ModelOption = None,
    data: DataOption = None,
    out_dir: OutDirOption = None,
) -> None:
    """Run the PGD attack on every test example."""

    with _diagnostics():
        cfg = _resolve_config(
            config,
            {
                "seed": seed,
                "train.mode": mode,
                "perturb.eps_series": eps_series,
                "perturb.eps_scalar": eps_scalar,
                "attack.steps": pgd_steps,
                "attack.step_series": pgd_step_series,
                "attack.step_scalar": pgd_step_scalar,
                "attack.restarts": restarts,
                "verify.limit": limit,
                "out_dir": _str(out_dir),
            },
        )
        layout = RunLayout(Path(cfg.out_dir))
        name, net, _ = _model(model, layout, cfg)
        test = _dataset(data, layout.test_csv, cfg.verify.limit)
        Z, errors = pgd_dataset(net, test.X, test.Y, cfg.perturb, cfg.attack, cfg.seed)
        path = layout.attack(name)
        _write_attack(path, net, test, Z, errors)
        _echo_for(cfg, path)
    mean = float(np.mean(errors)) if len(errors) else float("nan")
    console.print(f"[green]PGD results written to[/] {path} (mean relative error {100 * mean:.2f}%)")


@app.command("verify")
def verify_command(
    config: ConfigOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    eps_series: EpsSeriesOption = None,
    eps_scalar: EpsScalarOption = None,
    pgd_steps: StepsOption = None,
    method: MethodOption = None,
    limit: LimitOption = None,
    workers: WorkersOption = None,
    model: ModelOption = None,
    data: DataOption = None,
    out_dir: OutDirOption = None,
) -> None:
    """Certify every test example with the dual bound and/or the exact MILP."""

    with _diagnostics():
        cfg = _resolve_config(
            config,
            {
                "seed": seed,
                "train.mode": mode,
                "perturb.eps_series": eps_series,
                "perturb.eps_scalar": eps_scalar,
                "attack.steps": pgd_steps,
                "verify.method": method,
                "verify.limit": limit,
                "verify.workers": workers,
                "out_dir": _str(out_dir),
            },
        )
        layout = RunLayout(Path(cfg.out_dir))
        name, net, _ = _model(model, layout, cfg)
        test = _dataset(data, layout.test_csv, cfg.verify.limit)
        results = _verify(cfg, net, test, name, layout)
    for method_name, certs in results.items():
        timeouts = sum(c.status == "timeout" for c in certs)
        console.print(
            f"[green]{len(certs)} {method_name} certificates written to[/] "
            f"{layout.certificates(name, method_name)} ({timeouts} timeouts)"
        )


@app.command("report")
def report_command(
    config: ConfigOption = None,
    seed: SeedOption = None,
    mode: ModeOption = None,
    eps_series: EpsSeriesOption = None,
    eps_scalar: EpsScalarOption = None,
    pgd_steps: StepsOption = None,
    model: ModelOption = None,
    data: DataOption = None,
    out_dir: OutDirOption = None,
) -> None:
    """Assemble the per-range error table of one verified model."""

    with _diagnostics():
        cfg = _resolve_config(
            config,
            {
                "seed": seed,
                "train.mode": mode,
                "perturb.eps_series": eps_series,
                "perturb.eps_scalar": eps_scalar,
                "attack.steps": pgd_steps,
                "out_dir": _str(out_dir),
            },
        )
        layout = RunLayout(Path(cfg.out_dir))
        name, net, _ = _model(model, layout, cfg)
        certs = {m: read_certificates(layout.certificates(name, m)) for m in ("dual", "milp")}
        test = _dataset(data, layout.test_csv, len(certs["milp"]))
        directory = layout.report_dir(name)
        table, top = _report_one(cfg, net, test, certs, name, directory)
        emit_report(table, directory)
        _emit_top_series(cfg, net, test, top, directory)
        _echo_config(cfg, directory)
    render_table(table, console)


@app.command("pipeline")
def pipeline(
    config: ConfigOption = None,
    seed: SeedOption = None,
    eps_series: EpsSeriesOption = None,
    eps_scalar: EpsScalarOption = None,
    lambda_: LambdaOption = None,
    target_lo: TargetLoOption = None,
    target_hi: TargetHiOption = None,
    epochs: EpochsOption = None,
    n_train: NTrainOption = None,
    n_test: NTestOption = None,
    pgd_steps: StepsOption = None,
    limit: LimitOption = None,
    workers: WorkersOption = None,
    out_dir: OutDirOption = None,
) -> None:
    """Generate data, train all four modes, verify them and write the combined report."""

    with _diagnostics():
        cfg = _resolve_config(
            config,
            {
                "seed": seed,
                "perturb.eps_series": eps_series,
                "perturb.eps_scalar": eps_scalar,
                "train.lambda": lambda_,
                "train.target_lo": target_lo,
                "train.target_hi": target_hi,
                "train.epochs": epochs,
                "data.n_train": n_train,
                "data.n_test": n_test,
                "attack.steps": pgd_steps,
                "verify.limit": limit,
                "verify.workers": workers,
                "verify.method": "both",
                "out_dir": _str(out_dir),
            },
        )
        layout = RunLayout(Path(cfg.out_dir))
        _echo_config(cfg, layout.root)
        train_set, test_set = _generate(cfg, layout)
        test = test_set.head(cfg.verify.limit)
        directory = layout.report_dir()

        tables: list[EvalTable] = []
        for mode in TRAIN_MODES:
            mode_cfg = cfg.model_copy(update={"train": cfg.train.model_copy(update={"mode": mode})})
            net, _ = _train_one(mode_cfg, train_set, layout)
            certs = _verify(mode_cfg, net, test, mode, layout)
            table, top = _report_one(mode_cfg, net, test, certs, mode, directory, f"scatter_{mode}.csv")
            tables.append(table)
            if mode == "standard":
                _emit_top_series(mode_cfg, net, test, top, directory)

        emit_report(tables, directory)
    render_table(tables, console)


@app.command()
def check(
    ctx: typer.Context,
    config: Path | None = typer.Argument(
        None,
        help=(
            "Path to the run configuration to validate. When omitted, certsensor "
            "searches for certsensor.* or config.* files up to the repository root."
        ),
    ),
) -> None:
    """Validate a configuration file without running anything."""

    state = ctx.obj or CLIState()
    logger.debug("Checking configuration file %s", config)

    try:
        resolved_config = locate_config_file(config)
    except FileNotFoundError as exc:
        target = str(config) if config is not None else "auto"
        err_console.print(f"[red]Error:[/] Could not read '{target}': {exc.strerror or exc}")
        raise typer.Exit(code=1) from exc

    try:
        data = load_file(resolved_config)
    except ConfigSyntaxError as exc:
        err_console.print(f"[red]Syntax error(s) detected in '{resolved_config}':[/]")
        for issue in exc.issues:
            err_console.print(f"  - {issue.to_message()}", markup=False)
        raise typer.Exit(code=1) from exc

    try:
        cfg = normalize_config(data)
    except ValidationError as exc:
        err_console.print(f"[red]Error:[/] {_one_line(exc)}", highlight=False)
        raise typer.Exit(code=1) from exc

    if state.verbosity >= 2:
        console.print(cfg.dump())
    console.print("[green]Configuration looks good![/]")


def run() -> None:
    """Execute the Typer application; usage errors exit with status 1."""

    try:
        code = app(standalone_mode=False)
    except click.exceptions.UsageError as exc:
        exc.show(file=sys.stderr)
        sys.exit(1)
    except click.exceptions.Abort:
        err_console.print("[red]Aborted[/]")
        sys.exit(1)
    sys.exit(code if isinstance(code, int) else 0)


__all__ = ["RunLayout", "app", "run"]
