import json

import pytest

from transmon_qudit.config import ConfigError, RunConfig, load_config, parse_config


def reference_dict():
    return load_config().model_dump(mode="json")


def test_bundled_reference_loads():
    cfg = load_config()
    assert cfg.device.e_j_ghz == 14.07
    assert cfg.device.n_g == 0.5
    assert cfg.device.transmon().charge_cutoff == 20
    assert cfg.device.cavity().g01 == 0.1645
    assert cfg.analysis.readout_correction().lambda_bar == pytest.approx(0.9538, abs=1e-4)


@pytest.mark.parametrize("section", ["device", "analysis", "io", None])
def test_unknown_keys_rejected(section):
    data = reference_dict()
    (data if section is None else data[section])["typo_key"] = 1
    with pytest.raises(ConfigError):
        parse_config(data)


@pytest.mark.parametrize(
    "section,key,value",
    [
        ("device", "e_j_ghz", -1.0),
        ("device", "e_c_ghz", 0.0),
        ("device", "g01_ghz", -0.1),
        ("device", "n_g", 1.5),
        ("device", "charge_cutoff", 5),
        ("analysis", "t_read_us", -8.0),
        ("analysis", "inversion", "magic"),
        ("io", "seed", -1),
    ],
)
def test_invalid_values_rejected(section, key, value):
    data = reference_dict()
    data[section][key] = value
    with pytest.raises(ConfigError):
        parse_config(data)


def test_missing_device_rejected():
    with pytest.raises(ConfigError):
        parse_config({})


def test_hash_stable_and_sensitive():
    a = load_config()
    b = parse_config(json.loads(json.dumps(reference_dict())))
    assert a.config_hash() == b.config_hash()
    data = reference_dict()
    data["device"]["g01_ghz"] = 0.0
    assert parse_config(data).config_hash() != a.config_hash()


def test_with_io_overrides():
    cfg = load_config().with_io(out="elsewhere", seed=None)
    assert cfg.io.out == "elsewhere"
    assert cfg.io.seed == load_config().io.seed
    assert isinstance(cfg, RunConfig)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(bad)
