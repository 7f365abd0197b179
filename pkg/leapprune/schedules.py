"""
Baseline pruning schedules: cubic hard-threshold magnitude pruning and
constant-λ soft-threshold pruning. Both reuse the mask engine.
"""

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .         import errors
from .masks    import (
    BlockGeometry,
    PrunableMatrix,
    topk_mask
)
from .tensor   import (
    Array,
    Tensor,
    add,
    scale,
    sigmoid,
    stable_sigmoid,
    tensor_sum
)

__all__ = (
    "ScheduleParams",
    "cubic_sparsity",
    "magnitude_keep_mask",
    "soft_threshold_mask",
    "soft_threshold_step"
)

@dataclass(frozen=True)
class ScheduleParams:
    """
    Cubic sparsity schedule: `s0` until step `t0`, a cubic ramp up to `sf`
    reached at step `tf − tc`, then `sf` for the last `tc` cool-down steps.

    Raises:
        ConfigurationError: If the parameters are inconsistent.
    """

    s0: float
    sf: float
    t0: int
    tc: int
    tf: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.s0 < 1.0:
            raise errors.ConfigurationError("must be in [0, 1)", field="schedule.s0")
        if not 0.0 < self.sf <= 1.0:
            raise errors.ConfigurationError("must be in (0, 1]", field="schedule.sf")
        if self.s0 > self.sf:
            raise errors.ConfigurationError("initial sparsity exceeds final sparsity", field="schedule.s0")
        if self.tc < 0:
            raise errors.ConfigurationError("must be non-negative", field="schedule.tc")
        if not 0 <= self.t0 < self.tf - self.tc:
            raise errors.ConfigurationError("need 0 <= t0 < tf - tc", field="schedule.t0")

    @property
    def ramp_end(self) -> int:
        return self.tf - self.tc

def cubic_sparsity(t: float, p: ScheduleParams) -> float:
    """
    Sparsity at step `t`.

    The ramp runs over [t0, tf − tc] with argument (t − t0) / ((tf − tc) − t0),
    so the schedule is continuous at both ends.

    Raises:
        InputError: If `t` is negative.

    Example:
        >>> cubic_sparsity(50, ScheduleParams(s0=0.0, sf=0.9, t0=0, tc=0, tf=100))
        0.7875
    """
    if t < 0:
        raise errors.InputError(f"step {t} is negative")
    if t < p.t0:
        return p.s0
    if t >= p.ramp_end:
        return p.sf
    progress = (t - p.t0) / (p.ramp_end - p.t0)
    return p.sf + (p.s0 - p.sf) * (1.0 - progress) ** 3

def magnitude_keep_mask(
    weight: Tensor | Array,
    sparsity: float,
    geometry: BlockGeometry | None = None,
    norm: Literal["l1", "l2"] = "l1"
) -> Array:
    """
    Keep the 1 − `sparsity` fraction of blocks with the largest magnitude.

    A block's magnitude is the sum of absolute values (`l1`) or the Euclidean
    norm (`l2`) of its weights; with d = 1 both reduce to |w|.

    Raises:
        InputError: If `sparsity` is outside [0, 1].
        ConfigurationError: If `norm` is unknown.
    """
    values = weight.values if isinstance(weight, Tensor) else np.asarray(weight, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(1, -1)
    if not 0.0 <= sparsity <= 1.0:
        raise errors.InputError(f"sparsity {sparsity} is outside [0, 1]")
    geometry = geometry or BlockGeometry(1, *values.shape)
    if norm == "l1":
        aggregate = geometry.block_sum(np.abs(values))
    elif norm == "l2":
        aggregate = np.sqrt(geometry.block_sum(values * values))
    else:
        raise errors.ConfigurationError(f"unknown block norm '{norm}'", field="block_norm")
    return topk_mask(aggregate, 1.0 - sparsity)

def soft_threshold_mask(scores: Array, s_t: float) -> Array:
    """Mask entries are 1 exactly where sigmoid(score) > s_t (strictly)."""
    return (stable_sigmoid(scores) > s_t).astype(np.float64)

def soft_threshold_step(matrices: Sequence[PrunableMatrix], s_t: float) -> Tensor:
    """
    Install the soft-threshold masks for step threshold `s_t` and return the
    score penalty mean(sigmoid(S)) over every score of every matrix.

    The caller adds λ_reg times the returned penalty to the objective.
    """
    total: Tensor | None = None
    count = 0
    for p in matrices:
        p.set_mask(soft_threshold_mask(p.score.values, s_t))
        part = tensor_sum(sigmoid(p.score))
        total = part if total is None else add(total, part)
        count += p.score.size
    if total is None:
        raise errors.UsageError("soft-threshold pruning needs at least one prunable matrix")
    return scale(total, 1.0 / count)
