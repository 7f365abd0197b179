"""
Deterministic synthetic sequence-classification tasks.

- `pattern-parity`: token 1 is the pattern; the label is the parity of its
  number of occurrences (0..max_occurrences) in the sequence.
- `majority-token`: tokens 1 and 2 are markers appearing a different number
  of times; the label is 0 when token 1 is the more frequent one, else 1.

Remaining positions are filler tokens drawn uniformly from the rest of the vocabulary.
"""

import queue
import threading
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .           import errors
from .constants  import tasks

__all__ = (
    "Dataset",
    "BatchStream",
    "make_dataset",
    "pattern_parity",
    "majority_token"
)

PATTERN_TOKEN = 1
MARKER_TOKENS = (1, 2)

@dataclass(frozen=True)
class Dataset:
    tokens: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def head(self, count: int) -> "Dataset":
        return Dataset(self.tokens[:count], self.labels[:count])

def pattern_parity(
    size: int,
    rng: np.random.Generator,
    *,
    vocab_size: int,
    seq_len: int,
    max_occurrences: int = 3
) -> Dataset:
    if vocab_size < 3:
        raise errors.ConfigurationError("pattern-parity needs at least 3 tokens", field="vocab_size")
    if not 1 <= max_occurrences <= seq_len:
        raise errors.ConfigurationError(f"must be in [1, {seq_len}]", field="max_occurrences")
    tokens = rng.integers(PATTERN_TOKEN + 1, vocab_size, size=(size, seq_len))
    counts = rng.integers(0, max_occurrences + 1, size=size)
    for row, count in enumerate(counts):
        tokens[row, rng.choice(seq_len, size=count, replace=False)] = PATTERN_TOKEN
    return Dataset(tokens.astype(np.int64), (counts % 2).astype(np.int64))

def majority_token(
    size: int,
    rng: np.random.Generator,
    *,
    vocab_size: int,
    seq_len: int
) -> Dataset:
    if vocab_size < 4:
        raise errors.ConfigurationError("majority-token needs at least 4 tokens", field="vocab_size")
    if seq_len < 3:
        raise errors.ConfigurationError("majority-token needs sequences of at least 3 tokens", field="seq_len")
    half = seq_len // 2
    first, second = MARKER_TOKENS
    tokens = rng.integers(second + 1, vocab_size, size=(size, seq_len))
    labels = np.zeros(size, dtype=np.int64)
    for row in range(size):
        a = int(rng.integers(1, half + 1))
        b = int(rng.integers(0, half))
        if b >= a:
            b += 1
        positions = rng.permutation(seq_len)
        tokens[row, positions[:a]] = first
        tokens[row, positions[a:a + b]] = second
        labels[row] = 0 if a > b else 1
    return Dataset(tokens.astype(np.int64), labels)

def make_dataset(
    task: str,
    size: int,
    seed: int,
    *,
    vocab_size: int,
    seq_len: int,
    max_occurrences: int = 3
) -> Dataset:
    """
    Generate `size` labelled sequences for `task`, reproducibly from `seed`.

    Raises:
        ConfigurationError: If the task is unknown or the dimensions do not fit it.
    """
    if task not in tasks:
        raise errors.ConfigurationError(f"unknown task '{task}'", field="task")
    if size < 1:
        raise errors.ConfigurationError("must be positive", field="train_size")
    rng = np.random.default_rng(seed)
    if task == "pattern-parity":
        return pattern_parity(size, rng, vocab_size=vocab_size, seq_len=seq_len, max_occurrences=max_occurrences)
    return majority_token(size, rng, vocab_size=vocab_size, seq_len=seq_len)


_DONE = object()
_PUT_TIMEOUT = 0.05

class BatchStream:
    """
    One epoch of shuffled mini-batches, produced on a background thread into a
    bounded queue. The order depends only on `(seed, epoch)`.

    Closing the iterator early (a `break`, an exception in the training step)
    stops the producer; it never stays blocked on a full queue.

    Example:
        >>> for tokens, labels in BatchStream(dataset, 32, seed=17, epoch=0):
        ...     ...
    """

    def __init__(self, dataset: Dataset, batch_size: int, *, seed: int, epoch: int, prefetch: int = 4) -> None:
        if batch_size < 1:
            raise errors.ConfigurationError("must be positive", field="batch_size")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = epoch
        self.prefetch = prefetch
        self.producer: threading.Thread | None = None

    def __len__(self) -> int:
        return -(-len(self.dataset) // self.batch_size)

    def _put(self, out: "queue.Queue[object]", item: object, stop: threading.Event) -> bool:
        while not stop.is_set():
            try:
                out.put(item, timeout=_PUT_TIMEOUT)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self, out: "queue.Queue[object]", stop: threading.Event) -> None:
        try:
            order = np.random.default_rng([self.seed, self.epoch]).permutation(len(self.dataset))
            for start in range(0, len(order), self.batch_size):
                index = order[start:start + self.batch_size]
                if not self._put(out, (self.dataset.tokens[index], self.dataset.labels[index]), stop):
                    return
        except Exception as e:  # surfaced on the consumer side
            self._put(out, e, stop)
        self._put(out, _DONE, stop)

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        buffer: "queue.Queue[object]" = queue.Queue(maxsize=self.prefetch)
        stop = threading.Event()
        self.producer = threading.Thread(target=self._produce, args=(buffer, stop), daemon=True)
        self.producer.start()
        try:
            while True:
                item = buffer.get()
                if item is _DONE:
                    break
                if isinstance(item, Exception):
                    raise item
                yield item  # type: ignore[misc]
        finally:
            stop.set()
            self.producer.join()
