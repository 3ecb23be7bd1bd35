import pytest

from dda import config
from dda.config import ConfigError


def test_dump_round_trips():
    cfg = config.defaults()
    config.apply_overrides(cfg, ["trainer.lr=0.5", "network.hidden=3,4", "losses.lambda_p=none"])
    again = config.parse_text(config.dump(cfg))
    assert again.values == cfg.values


def test_parse_errors_name_the_line():
    with pytest.raises(ConfigError, match="f.ini:2: unknown section"):
        config.parse_text("\n[bogus]\n", "f.ini")
    with pytest.raises(ConfigError, match="<config>:1: key outside"):
        config.parse_text("lr = 1")
    with pytest.raises(ConfigError, match=":2: expected 'key = value'"):
        config.parse_text("[trainer]\nlr\n")
    with pytest.raises(ConfigError, match="bad value"):
        config.parse_text("[network]\ncoords = maybe\n")


def test_train_config_dict_keys():
    from dda.trainer import TrainConfig
    TrainConfig.from_dict(config.train_config_dict(config.defaults()))
