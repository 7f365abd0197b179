"""
Little-endian binary checkpoints.

Layout:

    magic        8 bytes   b"LEAPCKPT"
    version      uint32
    meta_len     uint32
    metadata     meta_len bytes of UTF-8 JSON (model config, profile, matrix table, temperature)
    n_tensors    uint32
    shape table  n_tensors × (name_len uint16, name UTF-8, ndim uint8, ndim × uint32 dims)
    data         every tensor as row-major '<f8', in shape-table order

Tensor order: model weights, then `sigma`, then `<matrix>.score`, then
`<matrix>.mask`, then the optional `probe.tokens` / `probe.logits` pair.
"""

import json
import struct
from dataclasses import dataclass, field
from typing import Any, BinaryIO, Literal

import numpy as np

from .           import errors
from .constants  import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    granularity_profiles
)
from .model      import ModelConfig, ToyModel
from .tensor     import stable_sigmoid
from .thresholds import ThresholdBank
from .utils      import check_file

__all__ = (
    "Checkpoint",
    "build_checkpoint",
    "write_checkpoint",
    "read_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "restore_model"
)

CheckpointKind = Literal["student", "teacher"]

@dataclass
class Checkpoint:
    """
    In-memory checkpoint: JSON-able metadata and named float64 arrays.

    Attributes:
        metadata (dict[str, Any]): `kind`, `model`, `profile`, `temperature` and
            `matrices` (one `{name, layer, sublayer, count, block}` entry per prunable matrix).
        tensors (dict[str, np.ndarray]): Arrays in file order.
    """

    metadata: dict[str, Any]
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return str(self.metadata.get("kind", "student"))

    @property
    def matrices(self) -> list[dict[str, Any]]:
        return list(self.metadata.get("matrices", []))

    @property
    def temperature(self) -> float | None:
        value = self.metadata.get("temperature")
        return None if value is None else float(value)

    @property
    def sigma(self) -> np.ndarray | None:
        return self.tensors.get("sigma")

    def densities(self) -> np.ndarray:
        """
        k(σ_i) for every matrix.

        Raises:
            FormatError: If the checkpoint has no σ vector or no temperature.
        """
        if self.sigma is None or self.temperature is None:
            raise errors.FormatError("checkpoint does not contain learnable thresholds")
        if self.sigma.shape != (len(self.matrices),):
            raise errors.FormatError(
                f"sigma has shape {self.sigma.shape} but the checkpoint lists {len(self.matrices)} matrices"
            )
        return stable_sigmoid(self.sigma / self.temperature)


def build_checkpoint(
    model: ToyModel,
    *,
    bank: ThresholdBank | None = None,
    kind: CheckpointKind = "student",
    probe_tokens: np.ndarray | None = None,
    probe_logits: np.ndarray | None = None,
    extra: dict[str, Any] | None = None
) -> Checkpoint:
    """Snapshot `model` (and `bank`) into a Checkpoint."""
    metadata: dict[str, Any] = {
        "kind": kind,
        "model": model.config.to_dict(),
        "profile": model.profile.name,
        "seed": model.seed,
        "temperature": None if bank is None else bank.temperature,
        "matrices": [
            {
                "name": p.name,
                "layer": p.layer,
                "sublayer": p.sublayer,
                "count": p.element_count,
                "block": p.geometry.block_size
            }
            for p in model.prunable
        ]
    }
    if extra:
        metadata.update(extra)

    tensors = {name: tensor.values.copy() for name, tensor in model.named_tensors().items()}
    if bank is not None:
        tensors["sigma"] = bank.sigma.values.copy()
    for p in model.prunable:
        tensors[f"{p.name}.score"] = p.score.values.copy()
    for p in model.prunable:
        tensors[f"{p.name}.mask"] = p.mask.copy()
    if probe_tokens is not None and probe_logits is not None:
        tensors["probe.tokens"] = np.asarray(probe_tokens, dtype=np.float64)
        tensors["probe.logits"] = np.asarray(probe_logits, dtype=np.float64)
    return Checkpoint(metadata, tensors)


def _write(f: BinaryIO, checkpoint: Checkpoint) -> None:
    meta = json.dumps(checkpoint.metadata).encode("utf-8")
    f.write(CHECKPOINT_MAGIC)
    f.write(struct.pack("<II", CHECKPOINT_VERSION, len(meta)))
    f.write(meta)
    f.write(struct.pack("<I", len(checkpoint.tensors)))
    for name, array in checkpoint.tensors.items():
        encoded = name.encode("utf-8")
        f.write(struct.pack("<H", len(encoded)))
        f.write(encoded)
        f.write(struct.pack("<B", array.ndim))
        f.write(struct.pack(f"<{array.ndim}I", *array.shape))
    for array in checkpoint.tensors.values():
        f.write(np.ascontiguousarray(array, dtype="<f8").tobytes())

def write_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    """
    Write `checkpoint` to `path`.

    Raises:
        TrainingError: If the file cannot be written.
    """
    check_file(path)
    try:
        with open(path, "wb") as f:
            _write(f, checkpoint)
    except OSError as e:
        raise errors.TrainingError(f"could not write checkpoint '{path}': {e}") from e


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise errors.FormatError("checkpoint is truncated")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

def read_checkpoint(path: str) -> Checkpoint:
    """
    Parse a checkpoint file.

    Raises:
        FormatError: If the file is missing, truncated, has trailing bytes,
            a wrong magic or version, or unreadable metadata.
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise errors.FormatError(f"could not read checkpoint '{path}': {e}") from e

    reader = _Reader(data)
    if reader.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise errors.FormatError(f"'{path}' is not a checkpoint (bad magic)")
    version, meta_len = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise errors.FormatError(f"unsupported checkpoint version {version}")
    try:
        metadata = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise errors.FormatError(f"checkpoint metadata is corrupt: {e}") from e
    if not isinstance(metadata, dict):
        raise errors.FormatError("checkpoint metadata must be a JSON object")

    (count,) = reader.unpack("<I")
    table: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise errors.FormatError(f"checkpoint tensor name is corrupt: {e}") from e
        (ndim,) = reader.unpack("<B")
        table.append((name, tuple(reader.unpack(f"<{ndim}I"))))

    tensors: dict[str, np.ndarray] = {}
    for name, shape in table:
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(reader.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if reader.offset != len(data):
        raise errors.FormatError("checkpoint has trailing bytes")
    return Checkpoint(metadata, tensors)


def save_checkpoint(path: str, model: ToyModel, **kwargs: Any) -> Checkpoint:
    """`build_checkpoint(model, **kwargs)` written to `path`; returns the checkpoint."""
    checkpoint = build_checkpoint(model, **kwargs)
    write_checkpoint(path, checkpoint)
    return checkpoint

def load_checkpoint(path: str) -> Checkpoint:
    return read_checkpoint(path)

def restore_model(checkpoint: Checkpoint) -> ToyModel:
    """
    Rebuild the ToyModel a checkpoint was taken from, weights, scores and masks included.

    Raises:
        FormatError: If the metadata or a tensor does not fit the model.
    """
    try:
        config = ModelConfig(**checkpoint.metadata["model"])
        profile = granularity_profiles[checkpoint.metadata["profile"]]
    except (KeyError, TypeError, errors.ConfigurationError) as e:
        raise errors.FormatError(f"checkpoint model description is invalid: {e}") from e

    model = ToyModel(config, profile, seed=int(checkpoint.metadata.get("seed", 17)))
    scores = {
        f"{p.name}.score": checkpoint.tensors[f"{p.name}.score"]
        for p in model.prunable if f"{p.name}.score" in checkpoint.tensors
    }
    model.load_tensors(checkpoint.tensors, scores=scores if len(scores) == len(model.prunable) else None)
    for p in model.prunable:
        mask = checkpoint.tensors.get(f"{p.name}.mask")
        if mask is not None:
            try:
                p.set_mask(mask)
            except (errors.DimensionError, errors.InputError) as e:
                raise errors.FormatError(str(e)) from e
    return model
