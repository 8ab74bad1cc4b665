import json
import numpy as np
import pandas as pd
import pytest
from scalesde.utils import ConfigError
from scalesde.utils import ExperimentConfig
from scalesde.utils import derive_seed
from scalesde.utils import load_config
from scalesde.utils import resolve_u0
from scalesde.utils import serialize_as_csv
from scalesde.utils import serialize_as_json


# default configuration is valid
def test_utils_default_config_valid():
    config = load_config({})

    assert config.validate() == []
    assert config.seed == 42
    assert config.diffusion["h"] == 0.1
    assert config.scale_grid() == pytest.approx([0.5, 0.8, 1.1, 1.4, 1.7, 2.0])


# blocks fall back to defaults for missing keys
def test_utils_config_partial_block():
    config = ExperimentConfig({"dynamics": {"M": 8}})

    assert config.dynamics["M"] == 8
    assert config.dynamics["n_steps"] == 64
    assert ExperimentConfig(config.to_dict()) == config


# every violation is collected
def test_utils_config_collects_errors():
    with pytest.raises(ConfigError) as err:
        load_config(
            {
                "scale": {"alpha_star": 2.0, "alpha_sup": 1.0},
                "dynamics": {"p": 1.0},
                "run": {"workers": 0},
                "extra": {},
            }
        )
    errors = err.value.errors

    assert "extra: unknown block" in errors
    assert any(e.startswith("scale.alpha_sup") for e in errors)
    assert any(e.startswith("dynamics.p") for e in errors)
    assert any(e.startswith("run.workers") for e in errors)


# unknown fields and non-object blocks are errors
def test_utils_config_unknown_field():
    errors = ExperimentConfig({"drift": {"strength": 1.0}, "scale": 3}).validate()

    assert "drift.strength: unknown field" in errors
    assert "scale: must be an object" in errors


# hard-core configurations need a radius
def test_utils_config_hardcore_radius():
    errors = ExperimentConfig({"configuration": {"kind": "hardcore"}}).validate()

    assert errors == ["configuration.hc_radius: must be > 0 for kind hardcore"]


# configuration files are read from disk
def test_utils_load_config_file(tmp_path):
    fp = tmp_path / "run.json"
    fp.write_text(json.dumps({"seed": 3, "dynamics": {"T": 2.0}}))
    config = load_config(str(fp))

    assert config.seed == 3
    assert config.dynamics["T"] == 2.0
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


# overrides replace seed, workers, output and suite
def test_utils_config_override():
    config = ExperimentConfig().override(seed=5, workers=4, out="x", suite="estimates")

    assert config.seed == 5
    assert config.run["workers"] == 4
    assert config.run["out"] == "x"
    assert config.run["suite"] == "estimates"


# seeds are stable and differ per purpose
def test_utils_derive_seed():
    a = derive_seed(42, "simulate", "noise")

    assert a == derive_seed(42, "simulate", "noise")
    assert a != derive_seed(42, "sample", "noise")
    assert a != derive_seed(43, "simulate", "noise")
    assert 0 <= a < 2 ** 64


# initial values from a number, a list or a file
def test_utils_resolve_u0(tmp_path):
    fp = tmp_path / "u0.json"
    fp.write_text("[1.0, 2.0, 3.0]")

    assert resolve_u0(1.5, 2).tolist() == [1.5, 1.5]
    assert resolve_u0([0.0, 1.0], 2).tolist() == [0.0, 1.0]
    assert resolve_u0(str(fp), 3).tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        resolve_u0([1.0], 2)


# numpy values become plain json
def test_utils_serialize_as_json():
    text = serialize_as_json({"a": np.float64(0.5), "b": np.arange(2), "c": float("inf")})

    assert json.loads(text) == {"a": 0.5, "b": [0, 1], "c": "inf"}


# floats are written with 17 significant digits
def test_utils_serialize_as_csv(tmp_path):
    fp = str(tmp_path / "sub" / "table.csv")
    serialize_as_csv(pd.DataFrame({"x": [0.1], "n": [3]}, columns=["x", "n"]), fp)

    with open(fp) as f:
        assert f.read() == "x,n\n0.10000000000000001,3\n"
