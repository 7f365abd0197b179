import json
import os

import numpy as np
import pytest

from leapprune import errors
from leapprune.abc import LoggerProtocol
from leapprune.checkpoint import load_checkpoint, restore_model
from leapprune.config import RunConfig, ScheduleConfig
from leapprune.logger import Logger
from leapprune.trainer import Trainer, run_training, train_teacher

SIGMOID_5 = 0.9933071490757153

def quiet() -> Logger:
    return Logger("TEST", log_level=0)

def read_metrics(out: str) -> list[dict]:
    with open(os.path.join(out, "metrics.jsonl"), encoding="utf-8") as f:
        return [json.loads(line) for line in f]

def read_json(out: str, name: str) -> dict:
    with open(os.path.join(out, name), encoding="utf-8") as f:
        return json.load(f)

@pytest.fixture
def teacher_path(tiny_config, tmp_path) -> str:
    config = tiny_config.override(out=str(tmp_path / "teacher"), teacher_epochs=2, teacher_min_accuracy=0.0)
    train_teacher(config, logger=quiet())
    return str(tmp_path / "teacher" / "checkpoint.bin")


def test_run_writes_every_artifact(tiny_config):
    summary = run_training(tiny_config, logger=quiet())
    out = tiny_config.out
    for name in ("config.json", "metrics.jsonl", "summary.json", "checkpoint.bin"):
        assert os.path.isfile(os.path.join(out, name))
    assert not os.path.exists(os.path.join(out, "diagnostic.json"))
    assert read_json(out, "summary.json") == json.loads(json.dumps(summary))
    assert read_json(out, "config.json")["method"] == "leap"
    assert summary["steps"] == 8
    assert summary["error"] is None
    assert len(summary["densities"]) == 6
    assert 0.0 <= summary["final_accuracy"] <= 1.0

def test_metrics_are_logged_every_interval_and_at_epoch_ends(tiny_config):
    run_training(tiny_config, logger=quiet())
    records = read_metrics(tiny_config.out)
    assert [r["step"] for r in records] == [2, 4, 6, 8]
    assert [r["epoch"] for r in records] == [0, 0, 1, 1]
    assert [r["eval_accuracy"] is not None for r in records] == [False, True, False, True]
    assert all(r["wall_ms"] is None for r in records)
    assert all(len(r["densities"]) == 6 for r in records)
    assert list(records[0]) == [
        "step", "epoch", "objective", "pure_loss", "reg_loss", "lambda_reg",
        "density", "densities", "train_accuracy", "eval_accuracy", "wall_ms"
    ]

def test_epoch_end_records_carry_the_stepped_thresholds(tiny_config):
    summary = run_training(tiny_config, logger=quiet())
    last = read_metrics(tiny_config.out)[-1]
    assert last["step"] == summary["steps"]
    assert last["density"] == summary["final_density"]
    assert last["densities"] == list(summary["densities"].values())

def test_wall_clock_is_opt_in(tiny_config):
    run_training(tiny_config.override(log_wall_clock=True), logger=quiet())
    assert all(r["wall_ms"] > 0 for r in read_metrics(tiny_config.out))

def test_runs_are_deterministic(tiny_config, tmp_path):
    first = tiny_config.override(out=str(tmp_path / "a"))
    second = tiny_config.override(out=str(tmp_path / "b"))
    assert run_training(first, logger=quiet()) == run_training(second, logger=quiet())
    assert read_metrics(first.out) == read_metrics(second.out)
    with open(os.path.join(first.out, "checkpoint.bin"), "rb") as a, open(os.path.join(second.out, "checkpoint.bin"), "rb") as b:
        assert a.read() == b.read()

@pytest.mark.parametrize("method", ["leap", "leap-constant-lambda", "hard-cubic", "soft-constant"])
def test_objective_is_pure_loss_plus_weighted_regularizer(tiny_config, method):
    run_training(tiny_config.override(method=method), logger=quiet())
    for r in read_metrics(tiny_config.out):
        assert r["objective"] == pytest.approx(r["pure_loss"] + r["lambda_reg"] * r["reg_loss"], rel=1e-12)

def test_adaptive_lambda_stays_within_bounds(tiny_config):
    trainer = Trainer(tiny_config, logger=quiet())
    data = trainer.train_set
    for start in range(0, 64, 16):
        record = trainer.train_step(data.tokens[start:start + 16], data.labels[start:start + 16], 0)
        assert 10.0 <= record["lambda_reg"] <= 320.0
    assert trainer.step == 4

def test_first_step_starts_from_sigmoid_of_five(tiny_config):
    trainer = Trainer(tiny_config, logger=quiet())
    record = trainer.train_step(trainer.train_set.tokens[:16], trainer.train_set.labels[:16], 0)
    assert record["step"] == 1
    assert record["density"] == pytest.approx(SIGMOID_5, abs=1e-12)
    np.testing.assert_allclose(record["densities"], SIGMOID_5, atol=1e-12)
    assert record["lambda_reg"] == pytest.approx(320.0 * (SIGMOID_5 - 0.5) ** 2 / 0.25)

def test_leap_moves_towards_the_target(tiny_config):
    summary = run_training(tiny_config, logger=quiet())
    assert summary["final_density"] < 0.99

def test_constant_lambda_is_fixed(tiny_config):
    run_training(tiny_config.override(method="leap-constant-lambda", constant_lambda=25.0), logger=quiet())
    assert {r["lambda_reg"] for r in read_metrics(tiny_config.out)} == {25.0}

def test_target_of_one_leaves_regularizer_inactive(tiny_config):
    run_training(tiny_config.override(target_density=1.0), logger=quiet())
    records = read_metrics(tiny_config.out)
    assert all(r["reg_loss"] == 0.0 and r["lambda_reg"] == 10.0 for r in records)

def test_hard_cubic_with_flat_schedule_keeps_density(tiny_config):
    config = tiny_config.override(method="hard-cubic", schedule=ScheduleConfig(s0=0.5, sf=0.5))
    summary = run_training(config, logger=quiet())
    for r in read_metrics(config.out):
        assert r["density"] == 0.5
        assert r["densities"] == [0.5] * 6
    assert summary["final_density"] == 0.5

def test_soft_threshold_reports_its_penalty(tiny_config):
    run_training(tiny_config.override(method="soft-constant", constant_lambda=2.0), logger=quiet())
    for r in read_metrics(tiny_config.out):
        assert r["lambda_reg"] == 2.0
        assert 0.0 < r["reg_loss"] < 1.0

def test_block_profile_prunes_whole_blocks(tiny_config):
    trainer = Trainer(tiny_config.override(profile="s8"), logger=quiet())
    trainer.run()
    for p in trainer.model.prunable:
        assert p.mask.shape == p.geometry.grid_shape
        assert p.geometry.block_size == 8
        effective = p.effective_weight()
        for r, c in zip(*np.nonzero(p.mask == 0)):
            assert not effective[8 * r:8 * r + 8, 8 * c:8 * c + 8].any()

@pytest.mark.parametrize("method", ["leap", "hard-cubic"])
@pytest.mark.parametrize("profile, hidden_size, ffn_size", [
    ("s8", 16, 32),
    ("s16", 16, 32),
    ("s32", 32, 64),
    ("h32", 32, 64)
])
def test_checkpoint_masks_keep_or_drop_whole_blocks(tiny_config, method, profile, hidden_size, ffn_size):
    config = tiny_config.override(method=method, profile=profile, hidden_size=hidden_size, ffn_size=ffn_size)
    run_training(config, logger=quiet())
    checkpoint = load_checkpoint(os.path.join(config.out, "checkpoint.bin"))
    model = restore_model(checkpoint)
    blocks = [matrix["block"] for matrix in checkpoint.matrices]
    assert len(blocks) == len(model.prunable) == 6
    for p, d in zip(model.prunable, blocks):
        assert set(np.unique(checkpoint.tensors[f"{p.name}.mask"])) <= {0.0, 1.0}
        zero = p.effective_weight() == 0.0
        rows, cols = zero.shape
        for r in range(0, rows, d):
            for c in range(0, cols, d):
                block = zero[r:r + d, c:c + d]
                assert block.all() or not block.any(), f"{p.name} block ({r}, {c})"

def test_non_finite_step_writes_a_diagnostic(tiny_config, monkeypatch):
    trainer = Trainer(tiny_config, logger=quiet())

    def broken(*args, **kwargs):
        raise errors.NonFiniteError("objective produced non-finite values")

    monkeypatch.setattr(trainer.method, "objective", broken)
    with pytest.raises(errors.TrainingError):
        trainer.run()
    diagnostic = read_json(tiny_config.out, "diagnostic.json")
    assert diagnostic["step"] == 0
    assert diagnostic["error"] == "NonFiniteError"

def test_distillation_needs_a_teacher(tiny_config):
    with pytest.raises(errors.ConfigurationError) as e:
        Trainer(tiny_config.override(alpha=0.9), logger=quiet())
    assert e.value.field == "teacher_checkpoint"

def test_teacher_checkpoint_holds_a_probe(teacher_path):
    checkpoint = load_checkpoint(teacher_path)
    assert checkpoint.kind == "teacher"
    assert checkpoint.sigma is None
    tokens = checkpoint.tensors["probe.tokens"].astype(np.int64)
    assert tokens.shape == (32, 8)
    teacher = restore_model(checkpoint)
    np.testing.assert_allclose(teacher(tokens).values, checkpoint.tensors["probe.logits"], rtol=1e-12)

def test_student_starts_from_the_teacher(tiny_config, teacher_path):
    trainer = Trainer(tiny_config.override(alpha=0.9, teacher_checkpoint=teacher_path), logger=quiet())
    assert trainer.teacher is not None
    teacher_tensors = trainer.teacher.named_tensors()
    for name, tensor in trainer.model.named_tensors().items():
        np.testing.assert_array_equal(tensor.values, teacher_tensors[name].values)
    summary = trainer.run()
    assert summary["steps"] == 8

def test_teacher_without_distillation_only_initializes(tiny_config, teacher_path):
    trainer = Trainer(tiny_config.override(teacher_checkpoint=teacher_path), logger=quiet())
    assert trainer.teacher is None

def test_teacher_must_match_the_model(tiny_config, teacher_path):
    with pytest.raises(errors.ConfigurationError):
        Trainer(tiny_config.override(alpha=0.9, teacher_checkpoint=teacher_path, hidden_size=32), logger=quiet())

def test_teacher_below_required_accuracy_fails(tiny_config, tmp_path):
    config = tiny_config.override(out=str(tmp_path / "weak"), teacher_epochs=1, teacher_min_accuracy=1.0)
    with pytest.raises(errors.TrainingError):
        train_teacher(config, logger=quiet())
    assert os.path.isfile(tmp_path / "weak" / "checkpoint.bin")

def test_debug_flag_raises_the_log_level(tiny_config):
    logger = quiet()
    assert isinstance(logger, LoggerProtocol)
    Trainer(tiny_config, logger=logger, debug=True)
    assert logger.log_level == 5
