import numpy as np
import pytest

from leapprune import errors
from leapprune.tasks import BatchStream, Dataset, make_dataset

def dataset(task: str = "pattern-parity", size: int = 200, seed: int = 17) -> Dataset:
    return make_dataset(task, size, seed, vocab_size=8, seq_len=8)


def test_pattern_parity_labels_count_the_pattern_token():
    data = dataset()
    counts = (data.tokens == 1).sum(axis=1)
    np.testing.assert_array_equal(data.labels, counts % 2)
    assert counts.max() <= 3
    assert data.tokens.min() >= 1 and data.tokens.max() < 8
    assert set(data.labels) == {0, 1}

def test_majority_token_labels_compare_marker_counts():
    data = dataset("majority-token")
    first, second = (data.tokens == 1).sum(axis=1), (data.tokens == 2).sum(axis=1)
    assert (first >= 1).all()
    assert (first != second).all()
    np.testing.assert_array_equal(data.labels, np.where(first > second, 0, 1))
    assert set(data.labels) == {0, 1}

def test_datasets_are_reproducible():
    a, b = dataset(seed=3), dataset(seed=3)
    np.testing.assert_array_equal(a.tokens, b.tokens)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(a.tokens, dataset(seed=4).tokens)

def test_make_dataset_errors():
    with pytest.raises(errors.ConfigurationError) as e:
        make_dataset("sorting", 10, 0, vocab_size=8, seq_len=8)
    assert e.value.field == "task"
    with pytest.raises(errors.ConfigurationError):
        make_dataset("pattern-parity", 0, 0, vocab_size=8, seq_len=8)
    with pytest.raises(errors.ConfigurationError):
        make_dataset("pattern-parity", 10, 0, vocab_size=2, seq_len=8)
    with pytest.raises(errors.ConfigurationError):
        make_dataset("majority-token", 10, 0, vocab_size=3, seq_len=8)

def test_batch_stream_covers_every_sample_once():
    data = dataset(size=50)
    stream = BatchStream(data, 16, seed=1, epoch=0)
    batches = list(stream)
    assert len(stream) == len(batches) == 4
    assert [len(labels) for _, labels in batches] == [16, 16, 16, 2]
    seen = np.concatenate([tokens for tokens, _ in batches])
    assert sorted(map(tuple, seen)) == sorted(map(tuple, data.tokens))

def test_batch_order_depends_on_seed_and_epoch():
    data = dataset(size=50)
    first = [labels for _, labels in BatchStream(data, 10, seed=1, epoch=0)]
    again = [labels for _, labels in BatchStream(data, 10, seed=1, epoch=0)]
    other = [tokens for tokens, _ in BatchStream(data, 10, seed=1, epoch=1)]
    for a, b in zip(first, again):
        np.testing.assert_array_equal(a, b)
    assert not all(
        np.array_equal(a, b) for a, b in zip(other, (tokens for tokens, _ in BatchStream(data, 10, seed=1, epoch=0)))
    )

def test_batch_stream_rejects_bad_batch_size():
    with pytest.raises(errors.ConfigurationError):
        BatchStream(dataset(), 0, seed=0, epoch=0)

def test_closing_the_stream_early_stops_the_producer():
    stream = BatchStream(dataset(), 1, seed=0, epoch=0, prefetch=2)
    batches = iter(stream)
    next(batches)
    batches.close()
    assert stream.producer is not None
    stream.producer.join(timeout=5)
    assert not stream.producer.is_alive()

def test_an_aborted_consumer_does_not_block_the_producer():
    stream = BatchStream(dataset(), 1, seed=0, epoch=0, prefetch=1)
    with pytest.raises(RuntimeError):
        for _ in stream:
            raise RuntimeError("step failed")
    stream.producer.join(timeout=5)  # type: ignore[union-attr]
    assert not stream.producer.is_alive()  # type: ignore[union-attr]

def test_head():
    assert len(dataset().head(10)) == 10
