import pytest
import yaml

from lanet.config import ConfigError, ExperimentConfig, SegLossConfig, SmoothingConfig, apply_overrides, load_config


def test_defaults_follow_reference_setup():
    cfg = ExperimentConfig()
    assert cfg.input_size == 512 and cfg.variant.input_size == 512
    assert cfg.seg_loss.alpha == 10.0 and cfg.smoothing.epsilon == 0.2
    assert (cfg.seg_optim.name, cfg.seg_optim.lr, cfg.seg_optim.momentum) == ("sgd", 1e-2, 0.9)
    assert (cfg.scr_optim.name, cfg.scr_optim.lr) == ("adamw", 3e-4)


def test_yaml_round_trip(tmp_path):
    cfg = load_config(None, ["seg_loss.alpha=5", "variant.use_lam=false", "input_size=128"])
    cfg.dump(tmp_path / "c.yaml")
    again = load_config(tmp_path / "c.yaml")
    assert again == cfg
    assert again.seg_loss.alpha == 5 and not again.variant.use_lam and again.variant.input_size == 128


def test_overrides_apply_after_file(tmp_path):
    (tmp_path / "c.yaml").write_text(yaml.safe_dump({"seed": 3, "seg_loss": {"alpha": 2}}))
    cfg = load_config(tmp_path / "c.yaml", ["seg_loss.alpha=7"])
    assert cfg.seed == 3 and cfg.seg_loss.alpha == 7


def test_tuple_fields_restored():
    cfg = load_config(None, ["seg_loss.per_layer_weights=[0, 0, 0, 1]"])
    assert cfg.seg_loss.per_layer_weights == (0, 0, 0, 1)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        load_config(None, ["seg_loss.beta=1"])


def test_malformed_override():
    with pytest.raises(ConfigError, match="key=value"):
        apply_overrides({}, ["alpha"])


@pytest.mark.parametrize("alpha", [0.0, -1.0])
def test_alpha_must_be_positive(alpha):
    with pytest.raises(ConfigError):
        SegLossConfig(alpha=alpha)


def test_clamp_eps_range():
    with pytest.raises(ConfigError):
        SegLossConfig(clamp_eps=0.1)


def test_smoothing_range():
    with pytest.raises(ConfigError):
        SmoothingConfig(epsilon=1.0)


def test_example_configs_load():
    from pathlib import Path
    configs = sorted((Path(__file__).parents[1] / "configs").glob("*.yaml"))
    assert configs
    for path in configs:
        load_config(path)
