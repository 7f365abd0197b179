"""
Learnable per-matrix thresholds and the target-ratio regularizer.

Each prunable matrix i owns a threshold σ_i whose tempered sigmoid
k(σ_i) = sigmoid(σ_i / T) is the fraction of its blocks kept. The global
remaining ratio R(σ) is the element-count weighted mean of the k(σ_i); the
regularizer (R − R_target)² is active only above the target and is weighted by
λ_reg, which is either constant or adapted from the current regularizer value.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .           import errors
from .constants  import SIGMA_INIT_MULTIPLIER
from .tensor     import (
    Tensor,
    add,
    mul,
    relu,
    scale,
    sigmoid,
    stable_sigmoid,
    sub,
    tensor_sum
)
from .types      import LambdaMode

__all__ = (
    "ThresholdBank",
    "RegState",
    "threshold_density",
    "remaining_ratio",
    "sparsity_reg_loss",
    "adaptive_lambda",
    "regularization",
    "leap_objective"
)

@dataclass
class ThresholdBank:
    """
    The vector σ of learnable thresholds and the hyperparameters around it.

    Attributes:
        sigma (Tensor): Trainable thresholds, one per prunable matrix.
        temperature (float): T in k(σ_i) = sigmoid(σ_i / T).
        target_ratio (float): R_target in (0, 1].
        lambda_max (float): Upper bound of the adaptive coefficient.
        lambda_min (float): Lower bound of the adaptive coefficient.
        element_counts (np.ndarray): Number of weights in each matrix.

    Raises:
        ConfigurationError: If any invariant is violated.
    """

    sigma: Tensor
    temperature: float
    target_ratio: float
    lambda_max: float
    lambda_min: float
    element_counts: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.element_counts = np.asarray(self.element_counts, dtype=np.int64)
        if self.element_counts.ndim != 1 or self.element_counts.size < 1:
            raise errors.ConfigurationError("at least one prunable matrix is required", field="element_counts")
        if (self.element_counts <= 0).any():
            raise errors.ConfigurationError("element counts must be positive", field="element_counts")
        if self.sigma.shape != (self.element_counts.size,):
            raise errors.ConfigurationError(
                f"sigma has shape {self.sigma.shape}, expected ({self.element_counts.size},)", field="sigma"
            )
        if not self.temperature > 0:
            raise errors.ConfigurationError("must be positive", field="temperature")
        if not 0 < self.target_ratio <= 1:
            raise errors.ConfigurationError("must be in (0, 1]", field="target_density")
        if not self.lambda_min > 0:
            raise errors.ConfigurationError("must be positive", field="lambda_min")
        if not self.lambda_min <= self.lambda_max:
            raise errors.ConfigurationError("must be at least lambda_min", field="lambda_max")

    @classmethod
    def initialize(
        cls,
        element_counts: Sequence[int] | np.ndarray,
        *,
        temperature: float,
        target_ratio: float,
        lambda_max: float,
        lambda_min: float,
        init_multiplier: float = SIGMA_INIT_MULTIPLIER
    ) -> "ThresholdBank":
        """Create a bank with every σ_i = init_multiplier · T (5T by default)."""
        counts = np.asarray(element_counts, dtype=np.int64)
        sigma = Tensor(np.full(counts.shape, init_multiplier * temperature), requires_grad=True, name="sigma")
        return cls(sigma, temperature, target_ratio, lambda_max, lambda_min, counts)

    @property
    def size(self) -> int:
        return int(self.element_counts.size)

    @property
    def weights(self) -> np.ndarray:
        """count_i / N_total for every matrix."""
        return self.element_counts / self.element_counts.sum()

    def densities(self) -> np.ndarray:
        """k(σ_i) for every matrix, as plain floats."""
        return stable_sigmoid(self.sigma.values / self.temperature)

    def densities_tensor(self) -> Tensor:
        """k(σ) as a recorded tensor, differentiable in σ."""
        return sigmoid(scale(self.sigma, 1.0 / self.temperature))

    def remaining_ratio_tensor(self, densities: Tensor | None = None) -> Tensor:
        """R(σ) as a recorded scalar tensor."""
        densities = self.densities_tensor() if densities is None else densities
        return tensor_sum(mul(densities, Tensor(self.weights)))


@dataclass(frozen=True)
class RegState:
    current_R: float
    reg_loss_value: float
    lambda_reg: float


def threshold_density(sigma_i: float, temperature: float) -> float:
    """
    k(σ_i) = sigmoid(σ_i / T), the fraction of blocks a matrix keeps.

    Raises:
        ConfigurationError: If the temperature is not positive.

    Example:
        >>> threshold_density(0.0, 32.0)
        0.5
    """
    if not temperature > 0:
        raise errors.ConfigurationError("must be positive", field="temperature")
    return float(stable_sigmoid(np.asarray(sigma_i / temperature)))

def remaining_ratio(bank: ThresholdBank) -> float:
    """R(σ) = Σ k(σ_i)·count_i / Σ count_i."""
    counts = bank.element_counts
    return float((bank.densities() * counts).sum() / counts.sum())

def sparsity_reg_loss(R: float, R_target: float) -> float:
    """(R − R_target)² above the target, 0 otherwise."""
    return (R - R_target) ** 2 if R >= R_target else 0.0

def adaptive_lambda(reg_loss_value: float, bank: ThresholdBank) -> float:
    """
    max(λ_max · L_reg / (1 − R_target)², λ_min).

    `reg_loss_value` is a plain float, so no gradient flows through the coefficient.

    Raises:
        ConfigurationError: If R_target is 1 (the scale (1 − R_target)² vanishes).
    """
    if bank.target_ratio >= 1.0:
        raise errors.ConfigurationError("adaptive lambda is undefined for a target of 1", field="target_density")
    return max(bank.lambda_max * float(reg_loss_value) / (1.0 - bank.target_ratio) ** 2, bank.lambda_min)

def regularization(
    bank: ThresholdBank,
    mode: LambdaMode = "adaptive",
    constant_lambda: float | None = None,
    densities: Tensor | None = None
) -> tuple[Tensor, RegState]:
    """
    Build L_reg(σ) on the active tape and pick λ_reg for this step.

    Args:
        bank (ThresholdBank): The thresholds.
        mode (LambdaMode): `adaptive` (λ from the current L_reg) or `constant`.
        constant_lambda (float | None): λ_reg for the constant mode.
        densities (Tensor | None): k(σ) already on the tape; reusing it lets the
            masked matmuls and the regularizer share one σ path.

    Returns:
        tuple[Tensor, RegState]: The unweighted regularizer and the step's state.

    Raises:
        ConfigurationError: If the mode is unknown or the constant λ is not positive.
    """
    R = bank.remaining_ratio_tensor(densities)
    excess = relu(sub(R, bank.target_ratio))
    reg = mul(excess, excess)
    reg_value = reg.item()

    if mode == "adaptive":
        lam = bank.lambda_min if bank.target_ratio >= 1.0 else adaptive_lambda(reg_value, bank)
    elif mode == "constant":
        if constant_lambda is None or not constant_lambda > 0:
            raise errors.ConfigurationError("must be positive in constant mode", field="constant_lambda")
        lam = float(constant_lambda)
    else:
        raise errors.ConfigurationError(f"unknown lambda mode '{mode}'", field="lambda_mode")

    return reg, RegState(current_R=R.item(), reg_loss_value=reg_value, lambda_reg=lam)

def leap_objective(
    pure_loss: Tensor,
    bank: ThresholdBank,
    mode: LambdaMode = "adaptive",
    constant_lambda: float | None = None,
    densities: Tensor | None = None
) -> tuple[Tensor, RegState]:
    """
    L_pure + λ_reg · L_reg(σ).

    σ receives the exact regularizer gradient from this term and, when the
    masked matmuls were given keep fractions from the same `densities`, the
    straight-through pure-loss signal as well.

    Returns:
        tuple[Tensor, RegState]: The objective and the regularizer state.
    """
    reg, state = regularization(bank, mode, constant_lambda, densities)
    return add(pure_loss, scale(reg, state.lambda_reg)), state
