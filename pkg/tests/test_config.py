import pytest

from neurwin.config import ConfigError, arm_params, load_config, parse_config


def test_parse():
    cfg = parse_config("""
# deadline experiment
env = deadline
N = 4   # arms
M=1
hidden = 16, 32
noise_levels = 0, 0.2,0.4
c = 0.5
""")
    assert cfg == {"env": "deadline", "N": 4, "M": 1, "hidden": (16, 32), "noise_levels": [0.0, 0.2, 0.4],
                   "c": 0.5}


def test_unknown_key_line_number():
    with pytest.raises(ConfigError, match=r"cfg:3: unknown key 'arms'"):
        parse_config("env = deadline\n\narms = 4\n", "cfg")


def test_malformed():
    with pytest.raises(ConfigError, match=":1:"):
        parse_config("env deadline")
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("N = four")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.cfg"):
        load_config(tmp_path / "nope.cfg")


def test_arm_params():
    cfg = {"env": "wireless", "r1": 1.0, "c": 0.3, "z_max": 10}
    assert arm_params(cfg, "wireless") == {"r1": 1.0}
    assert arm_params(cfg, "recovering") == {"z_max": 10}
