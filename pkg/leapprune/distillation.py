"""
Logit distillation from a frozen dense teacher:

    α · KL(teacher ‖ student) + (1 − α) · CE(student, labels) + λ_reg · L_reg(σ)
"""

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray

from .            import errors
from .tensor      import (
    Tensor,
    add,
    kl_divergence,
    scale,
    softmax_cross_entropy
)
from .thresholds  import (
    RegState,
    ThresholdBank,
    leap_objective
)
from .types       import LambdaMode

__all__ = (
    "LossTerms",
    "pure_distill_loss",
    "distill_objective"
)

@dataclass(frozen=True)
class LossTerms:
    """Plain-float values of the pieces of one step's objective."""

    kl: float
    cross_entropy: float
    pure_loss: float

def _check_alpha(alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise errors.ConfigurationError(f"{alpha} is outside [0, 1]", field="alpha")
    return float(alpha)

def pure_distill_loss(
    student_logits: Tensor,
    teacher_logits: Tensor | None,
    labels: NDArray[np.integer[Any]] | Sequence[int],
    alpha: float,
    distill_temperature: float = 1.0
) -> tuple[Tensor, LossTerms]:
    """
    α · KL + (1 − α) · CE, without the sparsity term.

    With α = 0 the teacher logits may be omitted.

    Raises:
        ConfigurationError: If α is outside [0, 1], or α > 0 without teacher logits.
    """
    alpha = _check_alpha(alpha)
    ce = softmax_cross_entropy(student_logits, labels)
    if alpha == 0.0:
        return ce, LossTerms(kl=0.0, cross_entropy=ce.item(), pure_loss=ce.item())
    if teacher_logits is None:
        raise errors.ConfigurationError("distillation with alpha > 0 needs teacher logits", field="alpha")

    kl = kl_divergence(student_logits, teacher_logits, distill_temperature)
    pure = add(scale(kl, alpha), scale(ce, 1.0 - alpha))
    return pure, LossTerms(kl=kl.item(), cross_entropy=ce.item(), pure_loss=pure.item())

def distill_objective(
    student_logits: Tensor,
    teacher_logits: Tensor | None,
    labels: NDArray[np.integer[Any]] | Sequence[int],
    alpha: float,
    bank: ThresholdBank,
    *,
    mode: LambdaMode = "adaptive",
    constant_lambda: float | None = None,
    distill_temperature: float = 1.0,
    densities: Tensor | None = None
) -> tuple[Tensor, LossTerms, RegState]:
    """
    The full LEAP training objective with logit distillation.

    Args:
        student_logits (Tensor): [batch×classes] logits of the pruned model.
        teacher_logits (Tensor | None): Logits of the frozen teacher (constant tensor).
        labels (array-like): Integer class labels.
        alpha (float): Weight of the KL term, in [0, 1].
        bank (ThresholdBank): Learnable thresholds.
        mode (LambdaMode): Adaptive or constant λ_reg.
        constant_lambda (float | None): λ_reg in constant mode.
        distill_temperature (float): Softening temperature of both distributions.
        densities (Tensor | None): k(σ) already recorded for the masked forward.

    Returns:
        tuple[Tensor, LossTerms, RegState]: Objective tensor, the pure-loss terms and the regularizer state.

    Raises:
        ConfigurationError: If α is outside [0, 1].

    Example:
        >>> objective, terms, reg = distill_objective(logits, teacher, labels, 0.9, bank)
        >>> objective.item() == terms.pure_loss + reg.lambda_reg * reg.reg_loss_value
        True
    """
    pure, terms = pure_distill_loss(student_logits, teacher_logits, labels, alpha, distill_temperature)
    objective, state = leap_objective(pure, bank, mode, constant_lambda, densities)
    return objective, terms, state
