import pytest

from ccmlab.config import SCHEMA, ConfigError, load_config, parse_config

BASIC = """\
[grid]
n_points = 256
domain_length = 40

[data]
kind = random
seed = 7

[run]
sign = defocusing
kappas = 1, 2 4
"""


def test_defaults_and_values():
    cfg = parse_config(BASIC)
    assert cfg["grid"]["n_points"] == 256
    assert cfg["grid"]["domain_length"] == 40.0
    assert cfg["run"]["kappas"] == (1.0, 2.0, 4.0)
    assert cfg["run"]["dt"] == SCHEMA["run"]["dt"][1]
    assert cfg["data"]["kind"] == "random"


def test_overrides_apply_last():
    cfg = parse_config(BASIC, ["run.dt=0.01", "data.seed = 9", "run.sign=Focusing"])
    assert cfg["run"]["dt"] == 0.01
    assert cfg["data"]["seed"] == 9
    assert cfg["run"]["sign"] == "focusing"


def test_unknown_key_names_line():
    with pytest.raises(ConfigError) as info:
        parse_config(BASIC + "bogus = 1\n", source="x.ini")
    assert "x.ini:12" in str(info.value)
    assert "run.bogus" in str(info.value)


def test_unknown_section():
    with pytest.raises(ConfigError, match=r"unknown section \[extra\]"):
        parse_config("[extra]\na = 1\n")


@pytest.mark.parametrize("override", ["run.dt=abc", "grid.n_points=7", "nosuch.key=1", "run",
                                      "run.sign=sideways", "compare.heights=1 -1",
                                      "spectral.mode=other", "run.dump_fields=maybe"])
def test_bad_overrides(override):
    with pytest.raises(ConfigError):
        parse_config(BASIC, [override])


def test_file_kind_needs_path():
    with pytest.raises(ConfigError, match="data.path"):
        parse_config("[data]\nkind = file\n")


def test_syntax_error_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("no section header\n")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_echo_is_plain_data():
    d = parse_config(BASIC).to_dict()
    assert d["run"]["kappas"] == [1.0, 2.0, 4.0]
    assert set(d) == set(SCHEMA)
