"""
Configuration models for certsensor runs.

- Accepts a **permissive** syntax coming from TOML/YAML/JSON or CLI overrides.
- Normalizes it into validated, immutable **canonical** models.
- Independent from I/O (no file reading happens here, see :mod:`certsensor.loader`).

Key points:
- `target_range` may be written as `[0.6, 1.0]`, `{lo = 0.6, hi = 1.0}` or `"0.6-1.0"`.
- `lambda` is a Python keyword; the field is `lambda_` with the alias `lambda`.
- A root-level `seed` is the master seed: it fills `data.seed` and `train.seed` unless those
  are given explicitly.
"""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

TrainMode = Literal["standard", "noise", "robust", "targeted"]
TRAIN_MODES: tuple[TrainMode, ...] = ("standard", "noise", "robust", "targeted")

# ---------------------------------------------------------------------------
# Utilities
# ---------------------------------------------------------------------------


def _parse_interval(v: Any) -> Any:
    """Coerce the accepted interval spellings into a ``(lo, hi)`` tuple."""

    if isinstance(v, str):
        lo, sep, hi = v.partition("-")
        if not sep:
            raise ValueError("interval strings must look like 'lo-hi'")
        return (float(lo), float(hi))
    if isinstance(v, dict):
        return (float(v["lo"]), float(v["hi"]))
    return v


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)


# ---------------------------------------------------------------------------
# Threat model
# ---------------------------------------------------------------------------


class PerturbationSpec(_Frozen):
    """Per-feature noise bounds; the last feature is the scalar sensor."""

    eps_series: float = Field(default=0.01, ge=0.0)
    eps_scalar: float = Field(default=0.001, ge=0.0)
    clip_lo: float = 0.0
    clip_hi: float = 1.0

    @model_validator(mode="after")
    def _check_clip(self) -> PerturbationSpec:
        if not self.clip_lo < self.clip_hi:
            raise ValueError("clip_lo must be strictly lower than clip_hi")
        return self

    @property
    def is_null(self) -> bool:
        return self.eps_series == 0.0 and self.eps_scalar == 0.0


class AttackConfig(_Frozen):
    steps: int = Field(default=10, ge=0)
    step_series: float = Field(default=0.0025, gt=0.0)
    step_scalar: float = Field(default=0.00025, gt=0.0)
    restarts: int = Field(default=1, ge=1)
    random_start: bool = False


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class TrainConfig(_Frozen):
    mode: TrainMode = "standard"
    hidden_dim: int = Field(default=32, ge=1)
    epochs: int = Field(default=1000, ge=1)
    batch_size: int = Field(default=512, ge=1)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    lr_peak: float = Field(default=0.035, gt=0.0)
    lr_peak_epoch: int = Field(default=250, ge=0)
    lambda_: float = Field(default=0.8, ge=0.0, le=1.0, alias="lambda")
    target_range: tuple[float, float] = (0.6, 1.0)
    eps_ramp_epochs: int = Field(default=250, ge=0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _schedule_defaults(cls, v: Any) -> Any:
        # peak and ramp default to a quarter of the run (250 of 1000 epochs)
        if isinstance(v, dict) and "epochs" in v:
            v = dict(v)
            quarter = int(v["epochs"]) // 4
            v.setdefault("lr_peak_epoch", quarter)
            v.setdefault("eps_ramp_epochs", quarter)
        return v

    @field_validator("target_range", mode="before")
    @classmethod
    def _coerce_range(cls, v: Any) -> Any:
        return _parse_interval(v)

    @model_validator(mode="after")
    def _check(self) -> TrainConfig:
        if self.lr_peak_epoch > self.epochs:
            raise ValueError("lr_peak_epoch must not exceed epochs")
        lo, hi = self.target_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("target_range must be an interval within [0, 1]")
        return self


# ---------------------------------------------------------------------------
# Data, verification and report
# ---------------------------------------------------------------------------


class DataConfig(_Frozen):
    n_train: int = Field(default=20000, ge=1)
    n_test: int = Field(default=1000, ge=1)
    input_dim: int = Field(default=32, ge=2)
    y_min: float = Field(default=0.05, gt=0.0, lt=1.0)
    noise_sigma: float = Field(default=0.005, ge=0.0)
    scalar_sigma: float = Field(default=0.001, ge=0.0)
    seed: int = Field(default=0, ge=0)


class VerifyConfig(_Frozen):
    method: Literal["dual", "milp", "both"] = "both"
    tol: float = Field(default=1e-6, gt=0.0)
    node_limit: int = Field(default=1_000_000, ge=1)
    limit: int | None = Field(default=None, ge=0)
    workers: int = Field(default=1, ge=1)

    @property
    def methods(self) -> tuple[Literal["dual", "milp"], ...]:
        if self.method == "both":
            return ("dual", "milp")
        return (self.method,)


class ReportConfig(_Frozen):
    noise_draws: int = Field(default=1000, ge=1)
    margin_tolerance: float = Field(default=0.01, gt=0.0)


# ---------------------------------------------------------------------------
# Root
# ---------------------------------------------------------------------------


class RunConfig(_Frozen):
    version: int = 1
    seed: int = Field(default=0, ge=0)
    out_dir: str = "runs"

    data: DataConfig = Field(default_factory=DataConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    perturb: PerturbationSpec = Field(default_factory=PerturbationSpec)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    report: ReportConfig = Field(default_factory=ReportConfig)

    @model_validator(mode="before")
    @classmethod
    def _pre(cls, v: Any) -> Any:
        if v is None:
            return {}
        if not isinstance(v, dict):
            raise ValueError("The root document must be an object")
        v = dict(v)
        if "seed" in v:
            for section in ("data", "train"):
                sub = dict(v.get(section) or {})
                sub.setdefault("seed", v["seed"])
                v[section] = sub
        return v

    def dump(self) -> dict[str, Any]:
        """Return the canonical document, suitable for YAML/JSON echo and reloading."""

        return self.model_dump(mode="json", by_alias=True)


# ---------------------------------------------------------------------------
# API
# ---------------------------------------------------------------------------


def normalize_config(data: dict[str, Any] | None) -> RunConfig:
    """Validate and normalize a dict (from TOML/YAML/JSON) into the **canonical** model.
    Raises `pydantic.ValidationError` on failure.
    """
    return RunConfig.model_validate(data or {})


__all__ = [
    "TRAIN_MODES",
    "AttackConfig",
    "DataConfig",
    "PerturbationSpec",
    "ReportConfig",
    "RunConfig",
    "TrainConfig",
    "TrainMode",
    "VerifyConfig",
    "normalize_config",
]
