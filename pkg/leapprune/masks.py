"""
Block-granular binary masks for prunable weight matrices.

Masks live on the block grid of a matrix (one entry per d×d block); the Top-K
operator keeps the blocks with the largest importance scores, and the masked
matmul routes gradients with the straight-through estimator (STE): the
selection is treated as identity with respect to the scores.
"""

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .         import errors
from .tensor   import (
    Array,
    Tensor,
    record_operation
)
from .types    import SubLayer
from .utils    import round_half_up

__all__ = (
    "BlockGeometry",
    "PrunableMatrix",
    "MaskSet",
    "SteGradients",
    "topk_mask",
    "expand_block_mask",
    "masked_forward",
    "ste_backward",
    "refresh_mask"
)

@dataclass(frozen=True)
class BlockGeometry:
    """
    Square d×d tiling of a [rows×cols] weight matrix.

    Raises:
        DimensionError: If `block_size` does not divide both dimensions.
    """

    block_size: int
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.block_size < 1 or self.rows < 1 or self.cols < 1:
            raise errors.DimensionError(f"invalid block geometry {self}")
        if self.rows % self.block_size or self.cols % self.block_size:
            raise errors.DimensionError(
                f"block size {self.block_size} does not divide a {self.rows}×{self.cols} matrix"
            )

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.rows // self.block_size, self.cols // self.block_size

    @property
    def unstructured(self) -> bool:
        return self.block_size == 1

    def block_sum(self, matrix: Array) -> Array:
        """Sum a [rows×cols] matrix over each block, giving a grid-shaped matrix."""
        r, c = self.grid_shape
        d = self.block_size
        return matrix.reshape(r, d, c, d).sum(axis=(1, 3))

def topk_mask(score: Array, keep_fraction: float) -> Array:
    """
    Binary mask keeping the round(keep_fraction·size) largest scores.

    Ties are broken by ascending row-major index (the lower index is kept first).

    Raises:
        InputError: If `keep_fraction` is outside [0, 1] or a score is NaN.

    Example:
        >>> topk_mask(np.array([[0.9, 0.1], [0.5, 0.7]]), 0.5)
        array([[1., 0.],
               [0., 1.]])
    """
    score = np.asarray(score, dtype=np.float64)
    if not 0.0 <= keep_fraction <= 1.0:
        raise errors.InputError(f"keep fraction {keep_fraction} is outside [0, 1]")
    if np.isnan(score).any():
        raise errors.InputError("importance scores contain NaN")
    flat = score.reshape(-1)
    kept = round_half_up(keep_fraction * flat.size)
    order = np.argsort(-flat, kind="stable")
    mask = np.zeros(flat.size, dtype=np.float64)
    mask[order[:kept]] = 1.0
    return mask.reshape(score.shape)

def expand_block_mask(mask: Array, geometry: BlockGeometry) -> Array:
    """
    Replicate each grid entry over its d×d block.

    Raises:
        DimensionError: If the mask does not have the geometry's grid shape.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != geometry.grid_shape:
        raise errors.DimensionError(f"mask {mask.shape} does not match block grid {geometry.grid_shape}")
    d = geometry.block_size
    return np.repeat(np.repeat(mask, d, axis=0), d, axis=1)


class PrunableMatrix:
    """
    A weight matrix with its importance scores, block geometry and current mask.

    The mask starts all-ones. After every optimizer step the matrix is marked
    stale and must be refreshed (`refresh_mask` or `set_mask`) before the next
    masked forward.

    Attributes:
        name (str): Matrix name such as `layer0.attention.query`.
        layer (int): Encoder layer index.
        sublayer (SubLayer): `mha` or `fc`.
        weight (Tensor): Trainable [rows×cols] weights.
        score (Tensor): Trainable importance scores on the block grid.
        geometry (BlockGeometry): Block tiling of `weight`.
        threshold_index (int): Position of this matrix's σ in the threshold bank.
        mask (Array): Current binary mask on the block grid.
        stale (bool): Whether the mask must be refreshed before use.
    """

    def __init__(
        self,
        name: str,
        weight: Tensor,
        score: Tensor,
        geometry: BlockGeometry,
        threshold_index: int,
        *,
        layer: int = 0,
        sublayer: SubLayer = "mha"
    ) -> None:
        if weight.shape != (geometry.rows, geometry.cols):
            raise errors.DimensionError(f"{name}: weight {weight.shape} does not match {geometry}")
        if score.shape != geometry.grid_shape:
            raise errors.DimensionError(f"{name}: score {score.shape} does not match grid {geometry.grid_shape}")
        self.name = name
        self.layer = layer
        self.sublayer: SubLayer = sublayer
        self.weight = weight
        self.score = score
        self.geometry = geometry
        self.threshold_index = threshold_index
        self.mask: Array = np.ones(geometry.grid_shape, dtype=np.float64)
        self.stale = False

    def __repr__(self) -> str:
        return (
            f"<PrunableMatrix {self.name} shape={self.weight.shape} "
            f"block={self.geometry.block_size} density={self.density:.4f}>"
        )

    @property
    def element_count(self) -> int:
        return self.geometry.rows * self.geometry.cols

    @property
    def density(self) -> float:
        """Fraction of weights kept by the current mask."""
        return float(self.mask.mean())

    def expanded_mask(self) -> Array:
        return expand_block_mask(self.mask, self.geometry)

    def effective_weight(self) -> Array:
        """The masked weights `expanded_mask ⊙ weight`."""
        return self.expanded_mask() * self.weight.values

    def refresh_mask(self, keep_fraction: float) -> None:
        self.mask = topk_mask(self.score.values, keep_fraction)
        self.stale = False

    def set_mask(self, mask: Array) -> None:
        """
        Install an externally computed grid mask.

        Raises:
            DimensionError: If the mask shape is not the block grid.
            InputError: If the mask is not binary.
        """
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != self.geometry.grid_shape:
            raise errors.DimensionError(f"{self.name}: mask {mask.shape} does not match grid {self.geometry.grid_shape}")
        if not np.isin(mask, (0.0, 1.0)).all():
            raise errors.InputError(f"{self.name}: mask entries must be 0 or 1")
        self.mask = mask
        self.stale = False

    def invalidate(self) -> None:
        self.stale = True


@dataclass(frozen=True)
class SteGradients:
    weight: Array
    score: Array
    keep: float
    input: Array

def ste_backward(
    p: PrunableMatrix,
    inputs: Array,
    upstream: Array,
    *,
    expanded: Array | None = None,
    weight: Array | None = None
) -> SteGradients:
    """
    Gradients of `inputs · (expanded ⊙ weight)` under the straight-through estimator.

    With G = inputsᵀ · upstream (the plain matmul gradient for the effective weight):
    - weight: expanded ⊙ G, so masked weights receive exactly zero;
    - score: block sums of weight ⊙ G, i.e. the mask gradient passed straight through;
    - keep: the sum of all mask-entry gradients (the mask is read as scaled by the keep fraction);
    - input: upstream · (expanded ⊙ weight)ᵀ.

    `expanded` and `weight` default to the matrix's current mask and weights.
    """
    expanded = p.expanded_mask() if expanded is None else expanded
    weight = p.weight.values if weight is None else weight
    full = inputs.T @ upstream
    movement = p.geometry.block_sum(weight * full)
    return SteGradients(
        weight=expanded * full,
        score=movement,
        keep=float(movement.sum()),
        input=upstream @ (expanded * weight).T
    )

def masked_forward(p: PrunableMatrix, inputs: Tensor, keep: Tensor | None = None) -> Tensor:
    """
    Compute `inputs · (expand(mask) ⊙ weight)` and record the STE backward rule.

    Args:
        p (PrunableMatrix): The matrix; its mask must be fresh.
        inputs (Tensor): [n×rows] activations.
        keep (Tensor | None): Scalar keep fraction k(σ_i) that receives the STE
            keep-fraction gradient; None when the mask does not come from σ.

    Raises:
        UsageError: If the mask is stale.
        DimensionError: If `inputs` does not have `rows` columns.
    """
    if p.stale:
        raise errors.UsageError(f"{p.name}: mask is stale; refresh it before the forward pass")
    if inputs.values.ndim != 2 or inputs.shape[1] != p.geometry.rows:
        raise errors.DimensionError(f"{p.name}: input {inputs.shape} does not match {p.geometry.rows} rows")
    expanded = p.expanded_mask()
    weight = p.weight.values
    x = inputs.values
    operands = (inputs, p.weight, p.score) if keep is None else (inputs, p.weight, p.score, keep)

    def rule(g: Array) -> tuple[Array, ...]:
        grads = ste_backward(p, x, g, expanded=expanded, weight=weight)
        out = (grads.input, grads.weight, grads.score)
        if keep is not None:
            out += (np.asarray(grads.keep, dtype=np.float64),)
        return out

    return record_operation("masked_matmul", x @ (expanded * weight), operands, rule)

def refresh_mask(p: PrunableMatrix, keep_fraction: float) -> None:
    """Recompute `p.mask` as the Top-K of its scores and clear the stale flag."""
    p.refresh_mask(keep_fraction)


class MaskSet:
    """
    The prunable matrices of a model, each exactly once, ordered by threshold index.

    Attributes:
        matrices (list[PrunableMatrix]): The matrices, `matrices[i].threshold_index == i`.
        refresh_count (int): How many times the whole set has been refreshed.
    """

    def __init__(self, matrices: Sequence[PrunableMatrix]) -> None:
        if not matrices:
            raise errors.UsageError("a mask set needs at least one prunable matrix")
        if len({id(p) for p in matrices}) != len(matrices):
            raise errors.UsageError("a prunable matrix appears more than once in the mask set")
        if [p.threshold_index for p in matrices] != list(range(len(matrices))):
            raise errors.UsageError("threshold indices must be 0..n-1 in order")
        self.matrices = list(matrices)
        self.refresh_count = 0

    def __len__(self) -> int:
        return len(self.matrices)

    def __iter__(self) -> Iterator[PrunableMatrix]:
        return iter(self.matrices)

    def __getitem__(self, index: int) -> PrunableMatrix:
        return self.matrices[index]

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.matrices]

    @property
    def element_counts(self) -> np.ndarray:
        return np.array([p.element_count for p in self.matrices], dtype=np.int64)

    def refresh(self, keep_fractions: Sequence[float]) -> None:
        if len(keep_fractions) != len(self.matrices):
            raise errors.DimensionError(f"expected {len(self.matrices)} keep fractions, got {len(keep_fractions)}")
        for p, keep in zip(self.matrices, keep_fractions):
            p.refresh_mask(float(keep))
        self.refresh_count += 1

    def invalidate(self) -> None:
        for p in self.matrices:
            p.invalidate()

    def realized_density(self) -> float:
        """Count-weighted fraction of weights kept by the current masks."""
        counts = self.element_counts
        kept = sum(p.density * p.element_count for p in self.matrices)
        return float(kept / counts.sum())
