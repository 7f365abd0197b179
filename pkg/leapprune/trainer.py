"""
Training loop: refresh masks → forward → objective → backward → optimizer step → log.

A run writes into `config.out`:

- `config.json`: the fully resolved configuration;
- `metrics.jsonl`: one MetricsRecord per logging interval and at every epoch end;
  epoch-end records carry the densities after the optimizer step;
- `summary.json`: the RunSummary;
- `checkpoint.bin`: the final model, thresholds, scores and masks;
- `logs/`: the log file;
- `diagnostic.json`: only when a step produced non-finite values.
"""

import os
import time
from typing import Any, Iterable, NoReturn

import numpy as np
from tqdm import tqdm

from .              import errors
from .abc           import LoggerProtocol, PruningMethodProtocol
from .checkpoint    import (
    load_checkpoint,
    restore_model,
    save_checkpoint
)
from .config        import RunConfig
from .constants     import granularity_profiles
from .logger        import Logger
from .methods       import DenseMethod, build_method
from .model         import ToyModel
from .optim         import SGD, LinearWarmup
from .tasks         import (
    BatchStream,
    Dataset,
    make_dataset
)
from .tensor        import Tape, Tensor, backward
from .types         import MetricsRecord, RunSummary
from .utils         import (
    append_jsonl,
    dump_json,
    ensure_directory
)

__all__ = (
    "Trainer",
    "run_training",
    "train_teacher",
    "evaluate"
)

EVAL_CHUNK = 256
PROBE_SIZE = 64

def evaluate(model: ToyModel, dataset: Dataset, chunk: int = EVAL_CHUNK) -> float:
    """Accuracy of `model` (with its current masks) on `dataset`."""
    correct = 0
    for start in range(0, len(dataset), chunk):
        logits = model(dataset.tokens[start:start + chunk])
        correct += int((logits.values.argmax(axis=1) == dataset.labels[start:start + chunk]).sum())
    return correct / len(dataset)


class Trainer:
    """
    Runs one training job described by a RunConfig.

    Attributes:
        config (RunConfig): The resolved configuration.
        out (str): Absolute output directory.
        model (ToyModel): The model being trained.
        method (PruningMethodProtocol): The pruning method.
        teacher (ToyModel | None): Frozen teacher used for distillation.

    Args:
        config (RunConfig): What to run.
        dense (bool, optional): Train a dense teacher instead of pruning.
            Uses `teacher_epochs` and plain cross-entropy. Default: False
        logger (LoggerProtocol | None, optional): Custom logger.
            Default: Logger("LEAP") writing into `<out>/logs`.
        debug (bool, optional): Enable debug logging. Sets the logger level to 5. Default: False

    Raises:
        ConfigurationError: If distillation is requested without a teacher checkpoint,
            or the teacher does not match the model dimensions.
        FormatError: If the teacher checkpoint is corrupt.

    Example:
        >>> summary = Trainer(load_config("leap.json")).run()
        >>> summary["final_density"]
        0.0994...
    """

    def __init__(
        self,
        config: RunConfig,
        *,
        dense: bool = False,
        logger: LoggerProtocol | None = None,
        debug: bool = False
    ) -> None:
        self.config = config
        self.dense = dense
        self.out = ensure_directory(config.out)
        self._logger: LoggerProtocol = logger if logger is not None else Logger(
            "LEAP", logs_folder=os.path.join(self.out, "logs")
        )
        if debug and isinstance(self._logger, LoggerProtocol):  # pyright: ignore[reportUnnecessaryIsInstance]
            self._logger.log_level = 5

        self.epochs = config.teacher_epochs if dense else config.epochs
        self.metrics_path = os.path.join(self.out, "metrics.jsonl")
        self.train_set = make_dataset(
            config.task, config.train_size, config.seed,
            vocab_size=config.vocab_size, seq_len=config.seq_len, max_occurrences=config.max_occurrences
        )
        self.eval_set = make_dataset(
            config.task, config.eval_size, config.seed + 1,
            vocab_size=config.vocab_size, seq_len=config.seq_len, max_occurrences=config.max_occurrences
        )
        self.model = ToyModel(config.model_config, granularity_profiles[config.profile], seed=config.seed)
        self.teacher = None if dense else self._load_teacher()
        self.method: PruningMethodProtocol = DenseMethod(self.model, config) if dense else build_method(config, self.model)
        self.optimizer = SGD(self.method.parameter_groups(), LinearWarmup(config.resolved_warmup_steps))
        self.step = 0

    def __repr__(self) -> str:
        return f"<Trainer method={self.method.name!r} out={self.out!r} step={self.step}>"

    def _load_teacher(self) -> ToyModel | None:
        path = self.config.teacher_checkpoint
        if path is None:
            if self.config.alpha > 0:
                raise errors.ConfigurationError(
                    "distillation (alpha > 0) needs a teacher checkpoint; run `teacher` first or set alpha to 0",
                    field="teacher_checkpoint"
                )
            return None

        checkpoint = load_checkpoint(path)
        teacher = restore_model(checkpoint)
        if teacher.config != self.model.config:
            raise errors.ConfigurationError(
                f"teacher dimensions {teacher.config.to_dict()} differ from the run's", field="teacher_checkpoint"
            )
        # the student starts from the teacher's dense weights; its scores keep their own init
        self.model.load_tensors(checkpoint.tensors)
        self._logger.info(f"Loaded teacher from {path}")
        return teacher if self.config.alpha > 0 else None

    def _write(self, action: str, *args: Any) -> None:
        try:
            if action == "json":
                dump_json(*args)
            elif action == "jsonl":
                append_jsonl(*args)
        except OSError as e:
            raise errors.TrainingError(f"could not write {args[0]}: {e}") from e

    def _abort(self, epoch: int, error: Exception) -> NoReturn:
        diagnostic = {
            "step": self.step,
            "epoch": epoch,
            **errors.error_payload(error)
        }
        self._write("json", os.path.join(self.out, "diagnostic.json"), diagnostic)
        self._logger.error(f"Step {self.step} produced non-finite values: {error}")
        raise errors.TrainingError(f"training aborted at step {self.step}: {error}") from error

    def train_step(self, tokens: np.ndarray, labels: np.ndarray, epoch: int) -> MetricsRecord:
        """
        One optimizer step on a batch.

        Raises:
            TrainingError: If the forward or backward pass produced NaN or Inf.
        """
        started = time.perf_counter()
        teacher_logits = Tensor(self.teacher(tokens).values) if self.teacher is not None else None
        try:
            with Tape():
                keeps = self.method.refresh(self.step)
                logits = self.model(tokens, keeps)
                objective, terms, reg = self.method.objective(logits, teacher_logits, labels)
                backward(objective)
        except errors.NonFiniteError as e:
            self._abort(epoch, e)

        densities = [float(k) for k in self.method.densities()]
        self.optimizer.step(self.step)
        self.method.zero_grad()
        self.model.mask_set.invalidate()
        self.step += 1

        return MetricsRecord(
            step=self.step,
            epoch=epoch,
            objective=objective.item(),
            pure_loss=terms.pure_loss,
            reg_loss=reg.reg_loss_value,
            lambda_reg=reg.lambda_reg,
            density=reg.current_R,
            densities=densities,
            train_accuracy=float((logits.values.argmax(axis=1) == labels).mean()),
            eval_accuracy=None,
            wall_ms=(time.perf_counter() - started) * 1000.0 if self.config.log_wall_clock else None
        )

    def evaluate(self) -> float:
        """Held-out accuracy with masks refreshed for the current step."""
        self.method.refresh(self.step)
        return evaluate(self.model, self.eval_set)

    def _close_epoch(self, record: MetricsRecord) -> None:
        """
        Epoch-end records describe the parameters after the step, the same
        state the evaluation, the checkpoint and the density report see.
        """
        record["eval_accuracy"] = self.evaluate()
        record["density"] = self.method.density()
        record["densities"] = [float(k) for k in self.method.densities()]

    def _epochs(self) -> Iterable[int]:
        if self.config.progress:
            return tqdm(range(self.epochs), desc=f"Training ({self.method.name})", unit="epoch")
        return range(self.epochs)

    def run(self) -> RunSummary:
        """
        Train for the configured number of epochs and write every artifact.

        Returns:
            RunSummary: Final accuracy, final density and per-matrix densities.

        Raises:
            TrainingError: On non-finite values or when an artifact cannot be written.
        """
        config = self.config
        self._write("json", os.path.join(self.out, "config.json"), config.to_dict())
        try:
            open(self.metrics_path, "w").close()
        except OSError as e:
            raise errors.TrainingError(f"could not write {self.metrics_path}: {e}") from e

        if not self.dense and config.method.startswith("leap") and config.target_density >= 1.0:
            self._logger.warn("target_density is 1: the sparsity regularizer is inactive for the whole run")
        self._logger.info(
            f"Training {self.method.name} on {config.task} | profile={config.profile} "
            f"epochs={self.epochs} steps/epoch={config.steps_per_epoch}"
        )

        for epoch in self._epochs():
            stream = BatchStream(self.train_set, config.batch_size, seed=config.seed, epoch=epoch)
            last = len(stream) - 1
            for index, (tokens, labels) in enumerate(stream):
                record = self.train_step(tokens, labels, epoch)
                if index == last:
                    self._close_epoch(record)
                if index == last or self.step % config.log_every == 0:
                    self._write("jsonl", self.metrics_path, record)
                    self._logger.info(
                        f"step {record['step']} | objective={record['objective']:.5f} "
                        f"L_pure={record['pure_loss']:.5f} L_reg={record['reg_loss']:.3e} "
                        f"lambda={record['lambda_reg']:.2f} R={record['density']:.4f}"
                    )
            self._logger.debug(f"Epoch {epoch} done | eval_accuracy={record['eval_accuracy']:.4f}")

        return self.finish()

    def finish(self) -> RunSummary:
        """Refresh the masks for the final parameters, then write the checkpoint and summary."""
        accuracy = self.evaluate()
        densities = self.method.densities()
        probe: dict[str, Any] = {}
        if self.dense:
            probe_set = self.eval_set.head(PROBE_SIZE)
            probe = {"probe_tokens": probe_set.tokens, "probe_logits": self.model(probe_set.tokens).values}

        save_checkpoint(
            os.path.join(self.out, "checkpoint.bin"),
            self.model,
            bank=getattr(self.method, "bank", None),
            kind="teacher" if self.dense else "student",
            extra={"method": self.method.name, "eval_accuracy": accuracy},
            **probe
        )
        summary = RunSummary(
            method=self.method.name,
            profile=self.config.profile,
            seed=self.config.seed,
            steps=self.step,
            final_accuracy=accuracy,
            final_density=self.method.density(),
            densities={p.name: float(k) for p, k in zip(self.model.prunable, densities)},
            error=None
        )
        self._write("json", os.path.join(self.out, "summary.json"), summary)
        self._logger.info(
            f"Finished {self.method.name} after {self.step} steps | "
            f"accuracy={accuracy:.4f} density={summary['final_density']:.4f}"
        )
        return summary


def run_training(config: RunConfig, *, logger: LoggerProtocol | None = None, debug: bool = False) -> RunSummary:
    """Prune a model as described by `config` and return its summary."""
    return Trainer(config, logger=logger, debug=debug).run()

def train_teacher(
    config: RunConfig,
    *,
    logger: LoggerProtocol | None = None,
    debug: bool = False
) -> tuple[ToyModel, RunSummary]:
    """
    Train the dense teacher for `teacher_epochs` and store its checkpoint
    (with a probe batch and its logits) in `config.out`.

    Returns:
        tuple[ToyModel, RunSummary]: The trained model and its summary.

    Raises:
        TrainingError: If the held-out accuracy stays below `teacher_min_accuracy`;
            the checkpoint is still written.
    """
    trainer = Trainer(config, dense=True, logger=logger, debug=debug)
    summary = trainer.run()
    if summary["final_accuracy"] < config.teacher_min_accuracy:
        message = (
            f"teacher reached accuracy {summary['final_accuracy']:.4f} after {trainer.epochs} epochs, "
            f"below the required {config.teacher_min_accuracy:.4f}"
        )
        trainer._logger.error(message)
        raise errors.TrainingError(message)
    return trainer.model, summary
