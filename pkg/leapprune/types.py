from typing import Literal, TypedDict
from dataclasses import dataclass

__all__ = (
    "Method",
    "SubLayer",
    "LambdaMode",
    "GranularityProfile",
    "MetricsRecord",
    "RunSummary",
    "DensityRow",
    "GroupMean",
    "SweepRow"
)

Method = Literal["leap", "leap-constant-lambda", "hard-cubic", "soft-constant"]
SubLayer = Literal["mha", "fc"]
LambdaMode = Literal["adaptive", "constant"]

@dataclass(frozen=True)
class GranularityProfile:
    """
    Square block sizes used for the attention (MHA) and feed-forward (FC) matrices.

    Attributes:
        name (str): Profile name such as `s32` or `h32`.
        mha_block (int): Block size for W_Q, W_K, W_V and W_O.
        fc_block (int): Block size for W_1 and W_2.
    """

    name: str
    mha_block: int
    fc_block: int

    def block_for(self, sublayer: SubLayer) -> int:
        return self.mha_block if sublayer == "mha" else self.fc_block

class MetricsRecord(TypedDict):
    step: int
    epoch: int
    objective: float
    pure_loss: float
    reg_loss: float
    lambda_reg: float
    density: float
    densities: list[float]
    train_accuracy: float
    eval_accuracy: float | None
    wall_ms: float | None

class RunSummary(TypedDict):
    method: str
    profile: str
    seed: int
    steps: int
    final_accuracy: float
    final_density: float
    densities: dict[str, float]
    error: str | None

class DensityRow(TypedDict):
    matrix: str
    layer: int
    sublayer: str
    density: float

class GroupMean(TypedDict):
    layer: int
    sublayer: str
    mean_density: float

class SweepRow(TypedDict):
    axis: str
    value: str
    final_accuracy: float | None
    final_density: float | None
    steps: int | None
    error: str | None
