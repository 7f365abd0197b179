"""
Plain SGD over named parameter groups, with optional heavy-ball momentum and a
linear learning-rate warmup shared by every group.
"""

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .         import errors
from .tensor   import Tensor

__all__ = (
    "ParamGroup",
    "LinearWarmup",
    "SGD"
)

@dataclass
class ParamGroup:
    """
    Tensors sharing a learning rate and momentum.

    Attributes:
        name (str): Group label, e.g. `weights`, `scores` or `sigma`.
        params (list[Tensor]): Trainable leaf tensors.
        lr (float): Learning rate after warmup.
        momentum (float): Heavy-ball coefficient; 0 gives plain SGD.
    """

    name: str
    params: list[Tensor]
    lr: float
    momentum: float = 0.0

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise errors.ConfigurationError("must be positive", field=f"{self.name}_lr")
        if not 0.0 <= self.momentum < 1.0:
            raise errors.ConfigurationError("must be in [0, 1)", field="momentum")


@dataclass(frozen=True)
class LinearWarmup:
    """Learning-rate factor growing linearly to 1 over `warmup_steps`, then constant."""

    warmup_steps: int = 0

    def factor(self, step: int) -> float:
        if self.warmup_steps <= 0 or step >= self.warmup_steps:
            return 1.0
        return (step + 1) / self.warmup_steps


@dataclass
class SGD:
    """
    Example:
        >>> optimizer = SGD([ParamGroup("weights", model.weight_parameters(), lr=0.05, momentum=0.9)])
        >>> optimizer.step(0)
        >>> optimizer.zero_grad()
    """

    groups: list[ParamGroup]
    warmup: LinearWarmup = field(default_factory=LinearWarmup)
    _velocity: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for group in self.groups:
            for p in group.params:
                if id(p) in seen:
                    raise errors.UsageError(f"tensor {p.name!r} appears in more than one parameter group")
                if not p.requires_grad:
                    raise errors.UsageError(f"tensor {p.name!r} does not require gradients")
                seen.add(id(p))

    @property
    def params(self) -> Iterable[Tensor]:
        for group in self.groups:
            yield from group.params

    def learning_rate(self, group: ParamGroup, step: int) -> float:
        return group.lr * self.warmup.factor(step)

    def step(self, step: int) -> None:
        """Apply one update at global step `step` using the accumulated gradients."""
        for group in self.groups:
            lr = self.learning_rate(group, step)
            for p in group.params:
                if p.grad is None:
                    continue
                update = p.grad
                if group.momentum:
                    velocity = self._velocity.get(id(p))
                    velocity = update.copy() if velocity is None else group.momentum * velocity + update
                    self._velocity[id(p)] = velocity
                    update = velocity
                p.values -= lr * update

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
