import json
import os
import numpy as np
import pytest
from scalesde import run_experiment
from scalesde.cli import main
from scalesde.core.experiment import Sample
from scalesde.core.experiment import SUITE_PARTS
from scalesde.utils import ExperimentConfig


def small_config(out, suite="picard", workers=1):
    return {
        "seed": 42,
        "configuration": {"box_halfwidth": 8.0},
        "dynamics": {"n_steps": 16, "M": 16},
        "run": {
            "suite": suite,
            "out": str(out),
            "workers": workers,
            "oracle_configs": 2,
            "regularity_seeds": 2,
            "regularity_halfwidths": [5.0, 10.0],
            "n_samples": 200,
            "pair_budget": 32,
        },
    }


def read_bytes(directory, name):
    with open(os.path.join(directory, name), "rb") as f:
        return f.read()


# closed-form suite passes without sampling
def test_experiment_estimates_suite(tmp_path):
    run = run_experiment(ExperimentConfig(), {"suite": "estimates", "out": str(tmp_path)})
    names = [check["name"] for check in run.manifest["checks"]]

    assert names == ["constants", "series", "bound_decay"]
    assert run.passed
    assert "configuration" not in run.output
    assert sorted(os.listdir(str(tmp_path))) == [
        "bounds.csv",
        "bounds_unit.csv",
        "manifest.json",
        "series.csv",
    ]


# unit Lipschitz bound peaks early and decays over most of the range
def test_experiment_bound_decay_unit(tmp_path):
    run = run_experiment(ExperimentConfig(), {"suite": "estimates", "out": str(tmp_path)})
    unit = run.output["tables"]["bounds_unit"]
    values = unit["bound"].to_numpy()
    peak = int(np.argmax(values))
    check = {c["name"]: c for c in run.manifest["checks"]}["bound_decay"]

    assert check["passed"]
    assert set(unit["L"]) == {1.0}
    assert len(values) - peak > 100
    assert np.all(np.diff(values[peak:]) < 0)
    assert values[-1] < values[0]
    assert check["measured"]["peak_unit"] == peak


# manifest on disk echoes the configuration and the verdict
def test_experiment_manifest_written(tmp_path):
    run = run_experiment(ExperimentConfig(), {"suite": "estimates", "out": str(tmp_path)})
    with open(str(tmp_path / "manifest.json")) as f:
        manifest = json.load(f)

    assert manifest["suite"] == "estimates"
    assert manifest["config"]["seed"] == 42
    assert manifest["passed"] is True
    assert manifest["error"] is None
    assert manifest["tables"] == ["bounds.csv", "bounds_unit.csv", "series.csv"]
    assert run.to_dict()["manifest"]["version"] == manifest["version"]


# picard suite runs every step and records its checks
def test_experiment_picard_suite(tmp_path):
    run = run_experiment(small_config(tmp_path))
    checks = {check["name"]: check for check in run.manifest["checks"]}

    assert run.output["error"] is None
    for name in (
        "neighbor_oracle",
        "admissibility_drift",
        "admissibility_diffusion",
        "locality",
        "picard_contraction",
        "fixed_point",
        "uniqueness",
        "growth_bound",
    ):
        assert checks[name]["passed"], name
    for name in ("regularity", "gl_fit_drift", "gl_fit_diffusion", "kolmogorov", "integrator_agreement"):
        assert name in checks
    for table in ("contraction.csv", "picard_diagnostics.csv", "summary.csv", "configuration.json"):
        assert os.path.exists(str(tmp_path / table))


# statistical checks pass on a representative configuration
def test_experiment_picard_suite_statistical_checks(tmp_path):
    config = small_config(tmp_path)
    config["configuration"]["box_halfwidth"] = 25.0
    config["dynamics"]["M"] = 256
    config["run"]["regularity_seeds"] = 4
    config["run"]["regularity_halfwidths"] = [25.0, 50.0]
    config["run"]["pair_budget"] = 64
    run = run_experiment(config)
    checks = {check["name"]: check for check in run.manifest["checks"]}

    assert run.output["error"] is None
    for name in (
        "regularity",
        "gl_fit_drift",
        "gl_fit_diffusion",
        "kolmogorov",
        "uniqueness",
        "integrator_agreement",
    ):
        assert checks[name]["passed"], name
    assert 0.25 <= checks["integrator_agreement"]["measured"] <= 0.75
    assert set(run.output["tables"]["uniqueness"]["start"]) == {"doubled", "offset"}


# worker count never changes a table
def test_experiment_workers_identical_tables(tmp_path):
    one = run_experiment(small_config(tmp_path / "one", workers=1))
    two = run_experiment(small_config(tmp_path / "two", workers=2))

    assert one.manifest["tables"] == two.manifest["tables"]
    for name in one.manifest["tables"]:
        if name.endswith(".csv"):
            assert read_bytes(str(tmp_path / "one"), name) == read_bytes(str(tmp_path / "two"), name), name


# invalid configuration is reported in the manifest
def test_experiment_invalid_config(tmp_path):
    config = {"dynamics": {"p": 4.0, "q": 3.0}, "run": {"out": str(tmp_path)}}
    run = run_experiment(config)

    assert not run.passed
    assert run.output["error"]["step"] == "config"
    assert "dynamics.q" in run.output["error"]["message"]
    assert os.path.exists(str(tmp_path / "manifest.json"))


# a failing step is recorded and later steps are skipped
def test_experiment_step_error_recorded(tmp_path):
    config = small_config(tmp_path, suite="simulate")
    config["dynamics"]["u0"] = [1.0, 2.0]
    run = run_experiment(config)

    assert not run.passed
    assert run.output["error"]["step"] == "simulate"
    assert "ensemble" not in run.output
    assert run.manifest["error"]["type"] == "ValueError"


# suites select their parts of the chain
def test_experiment_suite_parts():
    assert SUITE_PARTS["estimates"] == ("estimates",)
    assert SUITE_PARTS["picard"] == ("sample", "simulate", "picard")
    assert set(SUITE_PARTS["full"]) >= set(SUITE_PARTS["operator-fit"])


# intermediate step exposes its output
def test_experiment_sample_step(tmp_path):
    step = Sample(small_config(tmp_path, suite="sample"))
    result = step.to_dict()

    assert result["options"]["run"]["suite"] == "sample"
    assert len(result["configuration"]) == len(result["neighbors"].n)
    assert "regularity_stability" in result["tables"]
    assert repr(step).startswith("Sample(")


# command line exit status follows the checks
def test_experiment_cli_estimates(tmp_path):
    assert main(["estimates", "--out", str(tmp_path), "--seed", "7"]) == 0
    with open(str(tmp_path / "manifest.json")) as f:
        assert json.load(f)["config"]["seed"] == 7


# command line rejects an invalid configuration file
def test_experiment_cli_invalid_config(tmp_path):
    fp = tmp_path / "bad.json"
    fp.write_text(json.dumps({"scale": {"alpha_star": 2.0, "alpha_sup": 1.0}}))

    assert main(["estimates", "--config", str(fp), "--out", str(tmp_path / "out")]) == 2


# command line requires a suite
def test_experiment_cli_requires_suite():
    with pytest.raises(SystemExit):
        main([])
