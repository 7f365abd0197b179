"""
The pruning methods selectable from a run configuration.

- `leap`: learnable per-matrix thresholds with the adaptive λ_reg.
- `leap-constant-lambda`: the same with a fixed λ_reg.
- `hard-cubic`: magnitude pruning following the cubic sparsity schedule.
- `soft-constant`: sigmoid(score) > s_t masks with s_t from the cubic schedule
  and a constant-λ score penalty.

`DenseMethod` trains without pruning and is used for the teacher.
"""

from typing import Sequence

import numpy as np

from .              import errors
from .config        import RunConfig
from .distillation  import (
    LossTerms,
    distill_objective,
    pure_distill_loss
)
from .model         import ToyModel
from .optim         import ParamGroup
from .schedules     import (
    cubic_sparsity,
    magnitude_keep_mask,
    soft_threshold_step
)
from .tensor        import (
    Tensor,
    add,
    scale,
    take
)
from .thresholds    import (
    RegState,
    ThresholdBank,
    remaining_ratio
)

__all__ = (
    "PruningMethod",
    "DenseMethod",
    "LeapMethod",
    "HardCubicMethod",
    "SoftThresholdMethod",
    "build_method"
)

class PruningMethod:
    """Shared plumbing: the model, the config and the weight parameter group."""

    name = "base"

    def __init__(self, model: ToyModel, config: RunConfig) -> None:
        self.model = model
        self.config = config

    def __repr__(self) -> str:
        return f"<{type(self).__name__} name={self.name!r} matrices={len(self.model.mask_set)}>"

    def _weights_group(self) -> ParamGroup:
        return ParamGroup("weight", self.model.weight_parameters(), self.config.weight_lr, self.config.momentum)

    def _scores_group(self) -> ParamGroup:
        return ParamGroup("score", self.model.score_parameters(), self.config.score_lr)

    def parameter_groups(self) -> list[ParamGroup]:
        return [self._weights_group()]

    def refresh(self, step: int) -> Sequence[Tensor | None]:
        raise NotImplementedError

    def _pure(
        self,
        student_logits: Tensor,
        teacher_logits: Tensor | None,
        labels: np.ndarray
    ) -> tuple[Tensor, LossTerms]:
        return pure_distill_loss(
            student_logits, teacher_logits, labels,
            self.config.alpha if teacher_logits is not None else 0.0,
            self.config.distill_temperature
        )

    def objective(
        self,
        student_logits: Tensor,
        teacher_logits: Tensor | None,
        labels: np.ndarray
    ) -> tuple[Tensor, LossTerms, RegState]:
        pure, terms = self._pure(student_logits, teacher_logits, labels)
        return pure, terms, RegState(current_R=self.density(), reg_loss_value=0.0, lambda_reg=0.0)

    def densities(self) -> np.ndarray:
        return np.array([p.density for p in self.model.mask_set])

    def density(self) -> float:
        return self.model.mask_set.realized_density()

    def _tensors(self) -> list[Tensor]:
        return self.model.weight_parameters() + self.model.score_parameters()

    def zero_grad(self) -> None:
        for tensor in self._tensors():
            tensor.zero_grad()


class DenseMethod(PruningMethod):
    name = "dense"

    def refresh(self, step: int) -> Sequence[Tensor | None]:
        for p in self.model.mask_set:
            p.set_mask(np.ones(p.geometry.grid_shape))
        return [None] * len(self.model.mask_set)


class LeapMethod(PruningMethod):
    """
    Masks are the Top-K of each matrix's scores with K = k(σ_i); σ, the scores
    and the weights are all trained.

    Attributes:
        bank (ThresholdBank): The learnable thresholds, one per prunable matrix.
    """

    name = "leap"

    def __init__(self, model: ToyModel, config: RunConfig) -> None:
        super().__init__(model, config)
        self.name = config.method
        self.bank = ThresholdBank.initialize(
            model.mask_set.element_counts,
            temperature=config.temperature,
            target_ratio=config.target_density,
            lambda_max=config.lambda_max,
            lambda_min=config.lambda_min,
            init_multiplier=config.sigma_init_multiplier
        )
        self._densities: Tensor | None = None

    def parameter_groups(self) -> list[ParamGroup]:
        return [
            self._weights_group(),
            self._scores_group(),
            ParamGroup("sigma", [self.bank.sigma], self.config.sigma_lr)
        ]

    def refresh(self, step: int) -> Sequence[Tensor | None]:
        densities = self.bank.densities_tensor()
        self.model.mask_set.refresh(densities.values)
        self._densities = densities
        if not self.config.sigma_ste:
            return [None] * self.bank.size
        return [take(densities, i) for i in range(self.bank.size)]

    def objective(
        self,
        student_logits: Tensor,
        teacher_logits: Tensor | None,
        labels: np.ndarray
    ) -> tuple[Tensor, LossTerms, RegState]:
        return distill_objective(
            student_logits, teacher_logits, labels,
            self.config.alpha if teacher_logits is not None else 0.0,
            self.bank,
            mode=self.config.lambda_mode,
            constant_lambda=self.config.resolved_constant_lambda,
            distill_temperature=self.config.distill_temperature,
            densities=self._densities
        )

    def densities(self) -> np.ndarray:
        return self.bank.densities()

    def density(self) -> float:
        return remaining_ratio(self.bank)

    def _tensors(self) -> list[Tensor]:
        return super()._tensors() + [self.bank.sigma]


class HardCubicMethod(PruningMethod):
    """Keep the largest-magnitude blocks, at the sparsity the cubic schedule gives for the step."""

    name = "hard-cubic"

    def __init__(self, model: ToyModel, config: RunConfig) -> None:
        super().__init__(model, config)
        self.schedule = config.schedule_params()

    def refresh(self, step: int) -> Sequence[Tensor | None]:
        sparsity = cubic_sparsity(step, self.schedule)
        for p in self.model.mask_set:
            p.set_mask(magnitude_keep_mask(p.weight, sparsity, p.geometry, self.config.block_norm))  # type: ignore[arg-type]
        return [None] * len(self.model.mask_set)


class SoftThresholdMethod(PruningMethod):
    """Masks from sigmoid(score) > s_t, with λ · mean(sigmoid(S)) added to the objective."""

    name = "soft-constant"

    def __init__(self, model: ToyModel, config: RunConfig) -> None:
        super().__init__(model, config)
        self.schedule = config.schedule_params()
        self.lambda_reg = config.resolved_constant_lambda
        self._penalty: Tensor | None = None

    def parameter_groups(self) -> list[ParamGroup]:
        return [self._weights_group(), self._scores_group()]

    def refresh(self, step: int) -> Sequence[Tensor | None]:
        self._penalty = soft_threshold_step(self.model.prunable, cubic_sparsity(step, self.schedule))
        return [None] * len(self.model.mask_set)

    def objective(
        self,
        student_logits: Tensor,
        teacher_logits: Tensor | None,
        labels: np.ndarray
    ) -> tuple[Tensor, LossTerms, RegState]:
        if self._penalty is None:
            raise errors.UsageError("refresh() must run before objective()")
        pure, terms = self._pure(student_logits, teacher_logits, labels)
        state = RegState(
            current_R=self.density(),
            reg_loss_value=self._penalty.item(),
            lambda_reg=self.lambda_reg
        )
        return add(pure, scale(self._penalty, self.lambda_reg)), terms, state


def build_method(config: RunConfig, model: ToyModel) -> PruningMethod:
    """
    Instantiate the method named by `config.method` for `model`.

    Raises:
        ConfigurationError: If the method is unknown.
    """
    if config.method in ("leap", "leap-constant-lambda"):
        return LeapMethod(model, config)
    if config.method == "hard-cubic":
        return HardCubicMethod(model, config)
    if config.method == "soft-constant":
        return SoftThresholdMethod(model, config)
    raise errors.ConfigurationError(f"unknown method '{config.method}'", field="method")
