"""
Desk-scale pre-norm transformer encoder whose weight matrices mirror a BERT
layer: four attention projections and two feed-forward matrices per layer,
all prunable. Embeddings, biases, layer norms and the classifier are dense.
"""

from dataclasses import dataclass, asdict
from typing import Iterator, Sequence

import numpy as np

from .           import errors
from .constants  import SCORE_INIT_HIGH
from .masks      import (
    BlockGeometry,
    MaskSet,
    PrunableMatrix,
    masked_forward
)
from .tensor     import (
    Tensor,
    add,
    add_bias,
    batched_matmul,
    embedding,
    init_uniform,
    layer_norm,
    matmul,
    mean,
    relu,
    reshape,
    scale,
    softmax,
    transpose
)
from .types      import GranularityProfile, SubLayer
from .utils      import reify

__all__ = (
    "ModelConfig",
    "EncoderLayer",
    "ToyModel",
    "positional_encoding",
    "forward"
)

@dataclass(frozen=True)
class ModelConfig:
    """
    Encoder dimensions. The defaults keep 12 prunable matrices while a full
    training run stays at CPU-minute scale.

    Raises:
        ConfigurationError: If a dimension is not positive or the heads do not divide the hidden size.
    """

    vocab_size: int = 32
    seq_len: int = 16
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_size: int = 256
    num_classes: int = 2

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value < 1:
                raise errors.ConfigurationError("must be positive", field=name)
        if self.hidden_size % self.num_heads:
            raise errors.ConfigurationError("must divide hidden_size", field="num_heads")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    def to_dict(self) -> dict[str, int]:
        return asdict(self)

def positional_encoding(seq_len: int, hidden_size: int) -> np.ndarray:
    """Fixed sinusoidal position table of shape [seq_len×hidden_size]."""
    positions = np.arange(seq_len, dtype=np.float64)[:, None]
    rates = np.exp(-np.log(10000.0) * (np.arange(0, hidden_size, 2, dtype=np.float64) / hidden_size))
    table = np.zeros((seq_len, hidden_size), dtype=np.float64)
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: hidden_size // 2])
    return table

def _prunable(
    name: str,
    shape: tuple[int, int],
    block: int,
    index: int,
    layer: int,
    sublayer: SubLayer,
    rng: np.random.Generator
) -> PrunableMatrix:
    geometry = BlockGeometry(block, *shape)
    weight = init_uniform(shape, rng, fan_in=shape[0], name=name)
    score = Tensor(rng.uniform(0.0, SCORE_INIT_HIGH, size=geometry.grid_shape), requires_grad=True, name=f"{name}.score")
    return PrunableMatrix(name, weight, score, geometry, index, layer=layer, sublayer=sublayer)

def _dense(name: str, values: np.ndarray) -> Tensor:
    return Tensor(values, requires_grad=True, name=name)


class EncoderLayer:
    """
    One pre-norm encoder layer: x + MHA(LN(x)), then x + FFN(LN(x)).

    The six prunable matrices are, in threshold order, query, key, value,
    attention output, FFN intermediate and FFN output.
    """

    def __init__(
        self,
        index: int,
        config: ModelConfig,
        profile: GranularityProfile,
        rng: np.random.Generator,
        first_threshold: int
    ) -> None:
        h, f = config.hidden_size, config.ffn_size
        prefix = f"layer{index}"
        self.index = index
        self.num_heads = config.num_heads
        self.head_dim = config.head_dim

        mha, fc = profile.mha_block, profile.fc_block
        self.query = _prunable(f"{prefix}.attention.query", (h, h), mha, first_threshold, index, "mha", rng)
        self.key = _prunable(f"{prefix}.attention.key", (h, h), mha, first_threshold + 1, index, "mha", rng)
        self.value = _prunable(f"{prefix}.attention.value", (h, h), mha, first_threshold + 2, index, "mha", rng)
        self.output = _prunable(f"{prefix}.attention.output", (h, h), mha, first_threshold + 3, index, "mha", rng)
        self.intermediate = _prunable(f"{prefix}.ffn.intermediate", (h, f), fc, first_threshold + 4, index, "fc", rng)
        self.ffn_output = _prunable(f"{prefix}.ffn.output", (f, h), fc, first_threshold + 5, index, "fc", rng)

        self.biases = {
            p.name: _dense(f"{p.name}.bias", np.zeros(p.geometry.cols)) for p in self.prunable
        }
        self.attention_norm = (
            _dense(f"{prefix}.attention_norm.gamma", np.ones(h)),
            _dense(f"{prefix}.attention_norm.beta", np.zeros(h))
        )
        self.ffn_norm = (
            _dense(f"{prefix}.ffn_norm.gamma", np.ones(h)),
            _dense(f"{prefix}.ffn_norm.beta", np.zeros(h))
        )

    @property
    def prunable(self) -> list[PrunableMatrix]:
        return [self.query, self.key, self.value, self.output, self.intermediate, self.ffn_output]

    def dense_parameters(self) -> Iterator[Tensor]:
        yield from self.biases.values()
        yield from self.attention_norm
        yield from self.ffn_norm

    def _project(self, p: PrunableMatrix, x: Tensor, keeps: Sequence[Tensor | None]) -> Tensor:
        return add_bias(masked_forward(p, x, keeps[p.threshold_index]), self.biases[p.name])

    def _split_heads(self, x: Tensor, batch: int, length: int) -> Tensor:
        return transpose(reshape(x, (batch, length, self.num_heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, x: Tensor, keeps: Sequence[Tensor | None]) -> Tensor:
        batch, length, width = x.shape

        normed = reshape(layer_norm(x, *self.attention_norm), (batch * length, width))
        q = self._split_heads(self._project(self.query, normed, keeps), batch, length)
        k = self._split_heads(self._project(self.key, normed, keeps), batch, length)
        v = self._split_heads(self._project(self.value, normed, keeps), batch, length)
        weights = softmax(scale(batched_matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(self.head_dim)))
        context = reshape(transpose(batched_matmul(weights, v), (0, 2, 1, 3)), (batch * length, width))
        x = add(x, reshape(self._project(self.output, context, keeps), (batch, length, width)))

        normed = reshape(layer_norm(x, *self.ffn_norm), (batch * length, width))
        hidden = relu(self._project(self.intermediate, normed, keeps))
        return add(x, reshape(self._project(self.ffn_output, hidden, keeps), (batch, length, width)))


class ToyModel:
    """
    Token embedding + sinusoidal positions, `num_layers` encoder layers, a final
    layer norm, mean pooling and a linear classifier.

    Attributes:
        config (ModelConfig): Dimensions.
        profile (GranularityProfile): Block sizes of the MHA and FC matrices.
        layers (list[EncoderLayer]): The encoder layers.
        mask_set (MaskSet): All 6·num_layers prunable matrices.

    Example:
        >>> model = ToyModel(ModelConfig(), granularity_profiles["s32"], seed=17)
        >>> len(model.mask_set)
        12
    """

    def __init__(self, config: ModelConfig, profile: GranularityProfile, seed: int = 17) -> None:
        self.config = config
        self.profile = profile
        self.seed = seed
        rng = np.random.default_rng(seed)
        h = config.hidden_size

        self.embedding = init_uniform((config.vocab_size, h), rng, fan_in=1, name="embedding")
        self.positions = positional_encoding(config.seq_len, h)
        self.layers = [EncoderLayer(i, config, profile, rng, 6 * i) for i in range(config.num_layers)]
        self.final_norm = (_dense("final_norm.gamma", np.ones(h)), _dense("final_norm.beta", np.zeros(h)))
        self.classifier = init_uniform((h, config.num_classes), rng, fan_in=h, name="classifier.weight")
        self.classifier_bias = _dense("classifier.bias", np.zeros(config.num_classes))
        self.mask_set = MaskSet(self.prunable)

    def __repr__(self) -> str:
        return (
            f"<ToyModel layers={self.config.num_layers} hidden={self.config.hidden_size} "
            f"profile={self.profile.name} prunable={len(self.prunable)}>"
        )

    @reify
    def prunable(self) -> list[PrunableMatrix]:
        """The 6·num_layers prunable matrices in threshold order."""
        return [p for layer in self.layers for p in layer.prunable]

    def dense_parameters(self) -> list[Tensor]:
        """Every trainable tensor that is never pruned."""
        params = [self.embedding]
        for layer in self.layers:
            params.extend(layer.dense_parameters())
        params.extend(self.final_norm)
        params.extend((self.classifier, self.classifier_bias))
        return params

    def weight_parameters(self) -> list[Tensor]:
        """Dense parameters followed by the prunable weights."""
        return self.dense_parameters() + [p.weight for p in self.prunable]

    def score_parameters(self) -> list[Tensor]:
        return [p.score for p in self.prunable]

    def named_tensors(self) -> dict[str, Tensor]:
        """Every weight tensor by name, in a fixed order (scores excluded)."""
        return {tensor.name: tensor for tensor in self.weight_parameters()}  # type: ignore[misc]

    def load_tensors(self, values: dict[str, np.ndarray], *, scores: dict[str, np.ndarray] | None = None) -> None:
        """
        Overwrite weights (and optionally scores) from arrays keyed by name.

        Raises:
            FormatError: If a tensor is missing or has the wrong shape.
        """
        targets: list[tuple[str, Tensor, dict[str, np.ndarray]]] = [
            (name, tensor, values) for name, tensor in self.named_tensors().items()
        ]
        if scores is not None:
            targets += [(p.score.name, p.score, scores) for p in self.prunable]  # type: ignore[misc]
        for name, tensor, source in targets:
            if name not in source:
                raise errors.FormatError(f"checkpoint is missing tensor '{name}'")
            array = np.asarray(source[name], dtype=np.float64)
            if array.shape != tensor.shape:
                raise errors.FormatError(f"tensor '{name}' has shape {array.shape}, expected {tensor.shape}")
            tensor.values = array.copy()

    def __call__(self, tokens: np.ndarray, keeps: Sequence[Tensor | None] | None = None) -> Tensor:
        return forward(self, tokens, keeps)

def forward(model: ToyModel, tokens: np.ndarray, keeps: Sequence[Tensor | None] | None = None) -> Tensor:
    """
    Logits [batch×classes] for a [batch×length] token matrix.

    Args:
        model (ToyModel): The model; its masks must be fresh.
        tokens (np.ndarray): Integer token indices.
        keeps (Sequence[Tensor | None] | None): Per-matrix keep-fraction tensors that
            receive the straight-through gradient, indexed by threshold index.

    Raises:
        InputError: If a token is outside the vocabulary or the sequence is too long.
        UsageError: If a mask is stale.
    """
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise errors.InputError(f"tokens must be a [batch×length] matrix, got shape {tokens.shape}")
    batch, length = tokens.shape
    if length > model.config.seq_len:
        raise errors.InputError(f"sequence length {length} exceeds {model.config.seq_len}")
    keeps = list(keeps) if keeps is not None else [None] * len(model.prunable)

    x = embedding(model.embedding, tokens)
    x = add(x, Tensor(np.broadcast_to(model.positions[:length], x.shape)))
    for layer in model.layers:
        x = layer(x, keeps)
    pooled = mean(layer_norm(x, *model.final_norm), axis=1)
    return add_bias(matmul(pooled, model.classifier), model.classifier_bias)
