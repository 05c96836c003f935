import pytest
from pydantic import ValidationError

from certsensor.schema import (
    TRAIN_MODES,
    PerturbationSpec,
    RunConfig,
    TrainConfig,
    VerifyConfig,
    normalize_config,
)

# ---------------------------------------------------------------------------
# Defaults
# ---------------------------------------------------------------------------


def test_empty_document_gives_defaults():
    config = normalize_config(None)
    assert isinstance(config, RunConfig)
    assert config.perturb.eps_series == 0.01
    assert config.perturb.eps_scalar == 0.001
    assert config.attack.steps == 10
    assert config.train.hidden_dim == 32
    assert config.train.epochs == 1000
    assert config.train.lr_peak_epoch == 250
    assert config.train.lambda_ == 0.8
    assert config.train.target_range == (0.6, 1.0)
    assert config.verify.methods == ("dual", "milp")
    assert config.report.noise_draws == 1000


def test_train_modes():
    assert TRAIN_MODES == ("standard", "noise", "robust", "targeted")
    with pytest.raises(ValidationError):
        TrainConfig(mode="adversarial")


# ---------------------------------------------------------------------------
# Coercions
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("spelling", [[0.5, 0.9], {"lo": 0.5, "hi": 0.9}, "0.5-0.9"])
def test_target_range_spellings(spelling):
    assert TrainConfig(target_range=spelling).target_range == (0.5, 0.9)


def test_lambda_alias():
    assert TrainConfig.model_validate({"lambda": 0.3}).lambda_ == 0.3
    assert TrainConfig(lambda_=0.3).lambda_ == 0.3


def test_short_run_schedule():
    cfg = TrainConfig(epochs=100)
    assert (cfg.lr_peak_epoch, cfg.eps_ramp_epochs) == (25, 25)
    assert TrainConfig(epochs=100, lr_peak_epoch=50).lr_peak_epoch == 50


def test_root_seed_fills_sections():
    config = normalize_config({"seed": 7, "train": {"seed": 2}})
    assert config.data.seed == 7
    assert config.train.seed == 2


def test_dump_reloads_to_the_same_config():
    config = normalize_config({"seed": 3, "train": {"mode": "targeted", "lambda": 0.6}})
    dumped = config.dump()
    assert dumped["train"]["lambda"] == 0.6
    assert normalize_config(dumped) == config


def test_single_method():
    assert VerifyConfig(method="dual").methods == ("dual",)


# ---------------------------------------------------------------------------
# Rejections
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "document",
    [
        {"perturb": {"eps_series": -0.1}},
        {"perturb": {"clip_lo": 1.0, "clip_hi": 0.0}},
        {"train": {"lambda": 1.5}},
        {"train": {"target_range": [0.9, 0.2]}},
        {"train": {"epochs": 10, "lr_peak_epoch": 20}},
        {"train": {"momentum": 1.0}},
        {"verify": {"method": "smt"}},
        {"data": {"input_dim": 1}},
        {"unknown": 1},
    ],
)
def test_invalid_documents(document):
    with pytest.raises(ValidationError):
        normalize_config(document)


def test_root_must_be_a_table():
    with pytest.raises(ValidationError):
        normalize_config([1, 2])  # type: ignore[arg-type]


def test_models_are_frozen():
    spec = PerturbationSpec()
    with pytest.raises(ValidationError):
        spec.eps_series = 0.5  # type: ignore[misc]
    assert PerturbationSpec(eps_series=0.0, eps_scalar=0.0).is_null
