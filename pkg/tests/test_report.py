import json
import math
import os

import numpy as np
import pandas as pd
import pytest

from leapprune import errors
from leapprune.checkpoint import Checkpoint, build_checkpoint
from leapprune.config import RunConfig
from leapprune.constants import granularity_profiles
from leapprune.logger import Logger
from leapprune.methods import LeapMethod
from leapprune.model import ToyModel
from leapprune.report import Sweep, parse_axis_values, report_layer_densities, sweep
from leapprune.trainer import run_training

SIGMOID_5 = 0.9933071490757153

def quiet() -> Logger:
    return Logger("TEST", log_level=0)

def two_matrix_checkpoint() -> Checkpoint:
    metadata = {
        "temperature": 1.0,
        "matrices": [
            {"name": "layer0.attention.query", "layer": 0, "sublayer": "mha", "count": 100, "block": 1},
            {"name": "layer0.ffn.intermediate", "layer": 0, "sublayer": "fc", "count": 300, "block": 1}
        ]
    }
    return Checkpoint(metadata, {"sigma": np.array([0.0, math.log(3.0)])})


def test_fresh_thresholds_report_sigmoid_of_five():
    config = RunConfig()
    model = ToyModel(config.model_config, granularity_profiles["s1"], seed=1)
    method = LeapMethod(model, config)
    report = report_layer_densities(build_checkpoint(model, bank=method.bank))
    assert len(report.rows) == 12
    np.testing.assert_allclose(report.rows["density"], SIGMOID_5, atol=1e-6)
    np.testing.assert_allclose(report.groups["mean_density"], SIGMOID_5, atol=1e-6)
    assert report.overall == pytest.approx(SIGMOID_5, abs=1e-6)
    assert list(report.groups.columns) == ["layer", "sublayer", "mean_density"]
    assert len(report.groups) == 4

def test_group_means_are_count_weighted():
    report = report_layer_densities(two_matrix_checkpoint())
    assert list(report.rows["density"]) == pytest.approx([0.5, 0.75])
    groups = report.groups.set_index("sublayer")["mean_density"]
    assert groups["mha"] == pytest.approx(0.5)
    assert groups["fc"] == pytest.approx(0.75)
    assert report.overall == pytest.approx((0.5 * 100 + 0.75 * 300) / 400)

def test_to_csv_writes_rows_and_groups(tmp_path):
    rows_path, groups_path = report_layer_densities(two_matrix_checkpoint()).to_csv(str(tmp_path / "densities.csv"))
    assert groups_path == str(tmp_path / "densities_groups.csv")
    assert list(pd.read_csv(rows_path).columns) == ["matrix", "layer", "sublayer", "density"]
    assert len(pd.read_csv(groups_path)) == 2

def test_report_without_thresholds_fails():
    with pytest.raises(errors.FormatError):
        report_layer_densities(Checkpoint({"matrices": []}, {}))

def test_report_matches_the_run_summary(tiny_config):
    summary = run_training(tiny_config, logger=quiet())
    report = report_layer_densities(os.path.join(tiny_config.out, "checkpoint.bin"))
    assert report.overall == pytest.approx(summary["final_density"], rel=1e-12)
    assert dict(zip(report.rows["matrix"], report.rows["density"])) == pytest.approx(summary["densities"])

def test_report_matches_the_last_metrics_record(tiny_config):
    run_training(tiny_config, logger=quiet())
    with open(os.path.join(tiny_config.out, "metrics.jsonl"), encoding="utf-8") as f:
        last = json.loads(f.read().splitlines()[-1])
    report = report_layer_densities(os.path.join(tiny_config.out, "checkpoint.bin"))
    assert abs(last["density"] - report.overall) <= 1e-9
    np.testing.assert_allclose(report.rows["density"], last["densities"], rtol=0, atol=1e-9)

def test_parse_axis_values():
    assert parse_axis_values("temperature", "16, 32,48") == [16.0, 32.0, 48.0]
    assert parse_axis_values("seed", "1,2") == [1, 2]
    assert parse_axis_values("method", ["leap", "hard-cubic"]) == ["leap", "hard-cubic"]
    with pytest.raises(errors.UsageError):
        parse_axis_values("batch_size", "1,2")
    with pytest.raises(errors.UsageError):
        parse_axis_values("seed", "one")
    with pytest.raises(errors.UsageError):
        parse_axis_values("temperature", " , ")

def test_sweep_writes_one_row_per_value(tiny_config):
    frame = sweep(tiny_config, "seed", "1,2", logger=quiet())
    assert list(frame.columns) == ["axis", "value", "final_accuracy", "final_density", "steps", "error"]
    assert list(frame["value"]) == ["1", "2"]
    assert list(frame["steps"]) == [8, 8]
    assert frame["error"].isna().all()
    assert os.path.isfile(os.path.join(tiny_config.out, "sweep_seed.csv"))
    assert os.path.isfile(os.path.join(tiny_config.out, "seed=2", "summary.json"))

def test_single_value_sweep_equals_a_plain_run(tiny_config):
    frame = Sweep(tiny_config, "temperature", [8.0], logger=quiet()).run()
    child = tiny_config.override(temperature=8.0, out=os.path.join(tiny_config.out, "direct"))
    summary = run_training(child, logger=quiet())
    row = frame.iloc[0]
    assert row["final_accuracy"] == summary["final_accuracy"]
    assert row["final_density"] == summary["final_density"]
    assert row["steps"] == summary["steps"]

def test_failing_child_is_recorded(tiny_config):
    frame = sweep(tiny_config, "profile", "s1,s32", logger=quiet())
    assert pd.isna(frame.loc[0, "error"])
    assert frame.loc[1, "error"].startswith("ConfigurationError")
    assert pd.isna(frame.loc[1, "final_accuracy"])
