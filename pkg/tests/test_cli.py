import json
import os

import pytest

from leapprune import __display_version__
from leapprune.__main__ import parse

from conftest import TINY

@pytest.fixture
def config_path(tmp_path) -> str:
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**TINY, "out": str(tmp_path / "run")}, indent=2), encoding="utf-8")
    return str(path)


def test_version(capsys):
    parse(["-V"])
    assert capsys.readouterr().out.strip() == __display_version__

def test_train_prints_the_summary(config_path, tmp_path, capsys):
    out = str(tmp_path / "cli")
    parse(["train", "-c", config_path, "--temperature", "8", "--epochs", "1", "-o", out])
    printed = capsys.readouterr().out
    summary = json.loads(printed[printed.index("{\n"):])
    assert summary["steps"] == 4
    with open(os.path.join(out, "config.json"), encoding="utf-8") as f:
        assert json.load(f)["temperature"] == 8.0

def test_report_prints_the_tables(config_path, tmp_path, capsys):
    out = str(tmp_path / "cli")
    parse(["train", "-c", config_path, "--epochs", "1", "-o", out])
    capsys.readouterr()
    csv = str(tmp_path / "densities.csv")
    parse(["report", "-k", os.path.join(out, "checkpoint.bin"), "--csv", csv])
    printed = capsys.readouterr().out
    assert "layer0.attention.query" in printed
    assert "overall density:" in printed
    assert os.path.isfile(str(tmp_path / "densities_groups.csv"))

def test_invalid_config_exits_with_json_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "method": "leap",\n  "temperature": -4\n}\n', encoding="utf-8")
    with pytest.raises(SystemExit) as e:
        parse(["train", "-c", str(path)])
    assert e.value.code == 1
    payload = json.loads(capsys.readouterr().err)
    assert payload == {
        "error": "ConfigurationError",
        "message": "line 3: temperature: must be positive",
        "field": "temperature",
        "line": 3
    }

def test_invalid_override_names_the_field(config_path, capsys):
    with pytest.raises(SystemExit):
        parse(["train", "-c", config_path, "--target-density", "0"])
    payload = json.loads(capsys.readouterr().err)
    assert payload["field"] == "target_density"
    assert payload["line"] is None

def test_corrupt_checkpoint_exits_with_format_error(tmp_path, capsys):
    path = tmp_path / "broken.bin"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(SystemExit):
        parse(["report", "-k", str(path)])
    assert json.loads(capsys.readouterr().err)["error"] == "FormatError"

def test_missing_teacher_exits_with_configuration_error(config_path, capsys):
    with pytest.raises(SystemExit):
        parse(["train", "-c", config_path, "--alpha", "0.9"])
    assert json.loads(capsys.readouterr().err)["field"] == "teacher_checkpoint"

def test_sweep_prints_csv(config_path, tmp_path, capsys):
    parse(["sweep", "-c", config_path, "--axis", "seed", "--values", "3", "-o", str(tmp_path / "sweep")])
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-2] == "axis,value,final_accuracy,final_density,steps,error"
    assert lines[-1].startswith("seed,3,")

def test_missing_required_flag_is_a_json_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        parse(["train"])
    assert e.value.code == 2
    payload = json.loads(capsys.readouterr().err)
    assert payload["error"] == "UsageError"
    assert "-c/--config" in payload["message"]

def test_unknown_flag_is_a_json_usage_error(config_path, capsys):
    with pytest.raises(SystemExit) as e:
        parse(["train", "-c", config_path, "--bogus"])
    assert e.value.code == 2
    payload = json.loads(capsys.readouterr().err)
    assert payload["error"] == "UsageError"
    assert "--bogus" in payload["message"]

def test_invalid_choice_is_a_json_usage_error(config_path, capsys):
    with pytest.raises(SystemExit):
        parse(["train", "-c", config_path, "--method", "random"])
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"

def test_os_errors_are_reported_as_json(config_path, capsys, monkeypatch):
    def unwritable(*args, **kwargs):
        raise PermissionError(13, "Permission denied", "/runs/logs/run.log")

    monkeypatch.setattr("leapprune.__main__.run_training", unwritable)
    with pytest.raises(SystemExit) as e:
        parse(["train", "-c", config_path])
    assert e.value.code == 1
    payload = json.loads(capsys.readouterr().err)
    assert payload["error"] == "FileAccessError"
    assert payload["message"] == "cannot access '/runs/logs/run.log': Permission denied"
