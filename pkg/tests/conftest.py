import pytest

from leapprune.config import RunConfig

def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--runslow",
        action = "store_true",
        default = False,
        help = "run the long empirical training tests"
    )

def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)

TINY = dict(
    task = "pattern-parity",
    profile = "s1",
    alpha = 0.0,
    epochs = 2,
    batch_size = 16,
    train_size = 64,
    eval_size = 32,
    vocab_size = 8,
    seq_len = 8,
    hidden_size = 16,
    num_layers = 1,
    num_heads = 2,
    ffn_size = 32,
    log_every = 2,
    target_density = 0.5,
    temperature = 4.0,
    lambda_max = 320.0,
    lambda_min = 10.0
)

@pytest.fixture
def tiny_config(tmp_path) -> RunConfig:
    """A run small enough to train in well under a second."""
    return RunConfig(**TINY, out=str(tmp_path / "run"))
