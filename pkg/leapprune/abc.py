from typing import (
    Any, Sequence,
    Protocol, runtime_checkable
)

import numpy as np

from .distillation  import LossTerms
from .optim         import ParamGroup
from .tensor        import Tensor
from .thresholds    import RegState

__all__ = (
    "LoggerProtocol",
    "PruningMethodProtocol"
)

@runtime_checkable
class LoggerProtocol(Protocol):
    """
    What a Trainer or Sweep needs from the logger it is handed.

    Training writes one `info` line per logging interval, a `debug` line per
    epoch, a `warn` for a target density of 1 and an `error` before aborting on
    non-finite values. `debug=True` sets `log_level` to 5.

    Example:
        >>> run_training(config, logger=Logger("SWEEP", log_level=3))
    """
    log_level: int

    def debug(self, message: str | Any) -> None:
        """Per-epoch detail, e.g. held-out accuracy."""
        ...

    def info(self, message: str | Any) -> None:
        """Step summaries: objective, L_reg, λ_reg and R."""
        ...

    def warn(self, message: str | Any) -> None:
        """Degenerate but valid settings."""
        ...

    def error(self, message: str | Any) -> None:
        """A run is about to fail."""
        ...

    def critical(self, message: str | Any) -> None:
        ...

@runtime_checkable
class PruningMethodProtocol(Protocol):
    """
    Protocol for the pruning methods driven by the trainer.

    One training step calls `refresh` and `objective` inside an active tape,
    then the trainer runs backward and steps the optimizer over `parameter_groups()`.

    Attributes:
        name (str): Method name as used in configurations, e.g. `leap`.

    Methods:
        parameter_groups: Optimizer groups this method trains.
        refresh: Install this step's masks and return per-matrix keep tensors.
        objective: Build the training objective from the logits.
        densities: Per-matrix density currently reported.
        density: Global density currently reported.
        zero_grad: Clear every gradient the method touches.
    """
    name: str

    def parameter_groups(self) -> list[ParamGroup]:
        """Optimizer groups for this method."""
        ...

    def refresh(self, step: int) -> Sequence[Tensor | None]:
        """Install the masks for global step `step`."""
        ...

    def objective(
        self,
        student_logits: Tensor,
        teacher_logits: Tensor | None,
        labels: np.ndarray
    ) -> tuple[Tensor, LossTerms, RegState]:
        """The objective, its pure-loss terms and the regularizer state."""
        ...

    def densities(self) -> np.ndarray:
        """Per-matrix density, in threshold order."""
        ...

    def density(self) -> float:
        """Global density."""
        ...

    def zero_grad(self) -> None:
        """Reset gradients."""
        ...
