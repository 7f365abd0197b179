"""
Run configuration: one JSON file, validated field by field, with CLI overrides.

Example:
    ```json
    {
      "method": "leap",
      "profile": "s1",
      "target_density": 0.1,
      "temperature": 32,
      "teacher_checkpoint": "runs/teacher/checkpoint.bin",
      "out": "runs/leap-s1"
    }
    ```
"""

import json
from dataclasses import dataclass, field, fields, asdict, is_dataclass
from typing import Any, Mapping

from .           import errors
from .constants  import (
    DEFAULT_ALPHA,
    DEFAULT_LOG_EVERY,
    SIGMA_INIT_MULTIPLIER,
    granularity_profiles,
    methods,
    tasks
)
from .model      import ModelConfig
from .schedules  import ScheduleParams
from .types      import LambdaMode

__all__ = (
    "ScheduleConfig",
    "RunConfig",
    "load_config",
    "parse_config"
)

@dataclass(frozen=True)
class ScheduleConfig:
    """
    Cubic schedule settings of the baselines. `sf` defaults to 1 − target_density
    and `tf` to the total number of training steps.
    """

    s0: float = 0.0
    sf: float | None = None
    t0: int = 0
    tc: int = 0
    tf: int | None = None


@dataclass(frozen=True)
class RunConfig:
    """
    Every knob of one training run.

    The learning rates are tuned for plain SGD on the toy model. `sigma_lr`
    defaults to 40 rather than the 1e-2 used with an adaptive optimizer: the
    gradient reaching σ_i is scaled by 1/T through k(σ_i) and by the matrix's
    share of all weights through R, so at T = 32 a rate of 1e-2 leaves every
    threshold at its initial value.

    Raises:
        ConfigurationError: On the first invalid field, naming it.
    """

    method: str = "leap"
    task: str = "pattern-parity"
    profile: str = "s1"
    target_density: float = 0.1
    temperature: float = 32.0
    lambda_max: float = 320.0
    lambda_min: float = 10.0
    constant_lambda: float | None = None
    alpha: float = DEFAULT_ALPHA
    distill_temperature: float = 1.0
    epochs: int = 10
    batch_size: int = 32
    seed: int = 17

    weight_lr: float = 0.05
    momentum: float = 0.9
    score_lr: float = 1.0
    sigma_lr: float = 40.0
    warmup_steps: int | None = None

    sigma_init_multiplier: float = SIGMA_INIT_MULTIPLIER
    sigma_ste: bool = True
    block_norm: str = "l1"
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)

    vocab_size: int = 32
    seq_len: int = 16
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_size: int = 256
    train_size: int = 4096
    eval_size: int = 1024
    max_occurrences: int = 3

    teacher_checkpoint: str | None = None
    teacher_epochs: int = 20
    teacher_min_accuracy: float = 0.97

    log_every: int = DEFAULT_LOG_EVERY
    log_wall_clock: bool = False
    progress: bool = False
    out: str = "runs/leap"

    def __post_init__(self) -> None:
        _validate(self)

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig(
            vocab_size=self.vocab_size,
            seq_len=self.seq_len,
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            ffn_size=self.ffn_size
        )

    @property
    def steps_per_epoch(self) -> int:
        return -(-self.train_size // self.batch_size)

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    @property
    def resolved_warmup_steps(self) -> int:
        return self.steps_per_epoch if self.warmup_steps is None else self.warmup_steps

    @property
    def lambda_mode(self) -> LambdaMode:
        return "constant" if self.method == "leap-constant-lambda" else "adaptive"

    @property
    def resolved_constant_lambda(self) -> float:
        """λ_reg for the constant-λ methods; λ_max unless set explicitly."""
        return self.lambda_max if self.constant_lambda is None else self.constant_lambda

    def schedule_params(self) -> ScheduleParams:
        s = self.schedule
        return ScheduleParams(
            s0=s.s0,
            sf=1.0 - self.target_density if s.sf is None else s.sf,
            t0=s.t0,
            tc=s.tc,
            tf=self.total_steps if s.tf is None else s.tf
        )

    def override(self, **flags: Any) -> "RunConfig":
        """
        A copy with `flags` applied; None values are ignored.

        Raises:
            ConfigurationError: If a flag names an unknown field or has an invalid value.
        """
        changes = {
            key: asdict(value) if is_dataclass(value) else value
            for key, value in flags.items() if value is not None
        }
        if not changes:
            return self
        return parse_config({**self.to_dict(), **changes})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_OPTIONAL = {"constant_lambda", "warmup_steps", "teacher_checkpoint"}

def _require(ok: bool, name: str, message: str) -> None:
    if not ok:
        raise errors.ConfigurationError(message, field=name)

def _validate(c: RunConfig) -> None:
    _require(c.method in methods, "method", f"must be one of {', '.join(methods)}")
    _require(c.task in tasks, "task", f"must be one of {', '.join(tasks)}")
    _require(c.profile in granularity_profiles, "profile", f"must be one of {', '.join(granularity_profiles)}")
    _require(0.0 < c.target_density <= 1.0, "target_density", "must be in (0, 1]")
    _require(c.temperature > 0, "temperature", "must be positive")
    _require(c.lambda_min > 0, "lambda_min", "must be positive")
    _require(c.lambda_max >= c.lambda_min, "lambda_max", "must be at least lambda_min")
    _require(c.constant_lambda is None or c.constant_lambda > 0, "constant_lambda", "must be positive")
    _require(0.0 <= c.alpha <= 1.0, "alpha", "must be in [0, 1]")
    _require(c.distill_temperature > 0, "distill_temperature", "must be positive")
    for name in ("epochs", "batch_size", "train_size", "eval_size", "log_every", "teacher_epochs", "max_occurrences"):
        _require(getattr(c, name) >= 1, name, "must be positive")
    _require(c.seed >= 0, "seed", "must be non-negative")
    for name in ("weight_lr", "score_lr", "sigma_lr"):
        _require(getattr(c, name) > 0, name, "must be positive")
    _require(0.0 <= c.momentum < 1.0, "momentum", "must be in [0, 1)")
    _require(c.warmup_steps is None or c.warmup_steps >= 0, "warmup_steps", "must be non-negative")
    _require(c.sigma_init_multiplier > 0, "sigma_init_multiplier", "must be positive")
    _require(c.block_norm in ("l1", "l2"), "block_norm", "must be l1 or l2")
    _require(0.0 <= c.teacher_min_accuracy <= 1.0, "teacher_min_accuracy", "must be in [0, 1]")
    _require(c.max_occurrences <= c.seq_len, "max_occurrences", "must not exceed seq_len")
    _require(bool(c.out), "out", "must not be empty")

    model = c.model_config
    profile = granularity_profiles[c.profile]
    for block, dims, sublayer in (
        (profile.mha_block, (model.hidden_size,), "mha"),
        (profile.fc_block, (model.hidden_size, model.ffn_size), "fc")
    ):
        _require(
            all(dim % block == 0 for dim in dims), "profile",
            f"{sublayer} block size {block} does not divide the matrix dimensions {dims}"
        )

    if c.method in ("hard-cubic", "soft-constant"):
        c.schedule_params()


_SCALARS: dict[str, tuple[type, ...]] = {
    "float": (int, float),
    "int": (int,),
    "bool": (bool,),
    "str": (str,)
}

def _type_name(annotation: Any) -> str:
    return annotation.__name__ if isinstance(annotation, type) else str(annotation)

def _check_type(name: str, value: Any, annotation: Any) -> Any:
    annotation = _type_name(annotation)
    if value is None:
        if name in _OPTIONAL or "None" in annotation:
            return None
        raise errors.ConfigurationError("must not be null", field=name)
    base = annotation.split("|")[0].strip()
    accepted = _SCALARS.get(base)
    if accepted is None:
        return value
    if isinstance(value, bool) and base != "bool":
        raise errors.ConfigurationError(f"expected {base}, got a boolean", field=name)
    if not isinstance(value, accepted):
        raise errors.ConfigurationError(f"expected {base}, got {type(value).__name__}", field=name)
    return float(value) if base == "float" else value

def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    needle = f'"{key}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None

def _build(data: Mapping[str, Any]) -> RunConfig:
    if not isinstance(data, Mapping):
        raise errors.ConfigurationError("the configuration must be a JSON object")
    known = {f.name: f for f in fields(RunConfig)}
    values: dict[str, Any] = {}
    for name, value in data.items():
        if name not in known:
            raise errors.ConfigurationError("unknown field", field=name)
        if name == "schedule":
            if not isinstance(value, Mapping):
                raise errors.ConfigurationError("must be an object", field="schedule")
            schedule_fields = {f.name: f for f in fields(ScheduleConfig)}
            parsed: dict[str, Any] = {}
            for key, item in value.items():
                if key not in schedule_fields:
                    raise errors.ConfigurationError("unknown field", field=f"schedule.{key}")
                parsed[key] = _check_type(f"schedule.{key}", item, schedule_fields[key].type)
            values[name] = ScheduleConfig(**parsed)
        else:
            values[name] = _check_type(name, value, known[name].type)
    return RunConfig(**values)

def parse_config(data: Mapping[str, Any], text: str | None = None) -> RunConfig:
    """
    Build a RunConfig from decoded JSON.

    Args:
        data (Mapping[str, Any]): The decoded object.
        text (str | None): The source text, used to attach line numbers to errors.

    Raises:
        ConfigurationError: With `field` (and `line` when `text` is given) set.
    """
    try:
        return _build(data)
    except errors.ConfigurationError as e:
        if e.line is not None or e.field is None:
            raise
        line = _line_of(text, e.field.split(".")[-1])
        if line is None:
            raise
        raise errors.ConfigurationError(e.reason, field=e.field, line=line) from e

def load_config(path: str, encoding: str = "utf-8") -> RunConfig:
    """
    Read and validate a JSON run configuration.

    Raises:
        ConfigurationError: If the file is missing, is not valid JSON (with the
            line number) or holds an invalid field (with its name).
    """
    try:
        with open(path, "r", encoding=encoding) as f:
            text = f.read()
    except OSError as e:
        raise errors.ConfigurationError(f"cannot read '{path}': {e.strerror}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise errors.ConfigurationError(e.msg, line=e.lineno) from e
    return parse_config(data, text)
