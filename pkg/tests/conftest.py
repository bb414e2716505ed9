"""Shared fixtures for the dsnn test suite."""

import pytest

from dsnn.data.synthetic import gen_gaussian_clusters, gen_symbol_count
from dsnn.models.lstm import LstmModel
from dsnn.models.mlp import MlpModel
from dsnn.models.toy import build_toy_plan
from dsnn.training.metrics import reset_metrics
from dsnn.training.trainer import TrainPlan


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run end-to-end training tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _fresh_metrics():
    reset_metrics()
    yield
    reset_metrics()


@pytest.fixture
def clusters():
    """256 samples, 4 classes in 10 dims."""
    return gen_gaussian_clusters(seed=0, n=256, classes=4, dim=10, noise=0.3)


@pytest.fixture
def mlp():
    """10 -> 20 -> 4. With 2x1 blocks fc0.w has 100 blocks and fc1.w has 40."""
    return MlpModel(input_dim=10, hidden=[20], classes=4, seed=0)


@pytest.fixture
def toy_plan(mlp):
    return build_toy_plan(mlp)


@pytest.fixture
def train_plan(toy_plan):
    """Short schedule: ramp ends at step 10, masks refresh every 5 steps."""
    return TrainPlan(
        plan=toy_plan,
        total_steps=20,
        freeze_steps=5,
        mask_update_frequency=5,
        ramp_steps=10,
        lr=1e-2,
        batch_size=32,
        block_height=2,
        log_every=1000,
    )


@pytest.fixture
def pretrained(mlp, clusters, train_plan):
    from dsnn.training.trainer import pretrain

    return pretrain(mlp, clusters, 10, train_plan)


@pytest.fixture
def symbols():
    """256 sequences of 6 tokens over a 4-symbol vocabulary, 3 classes."""
    return gen_symbol_count(seed=0, n=256, seq_len=6, vocab=4, classes=3)


@pytest.fixture
def lstm():
    """4 -> LSTM(8) -> 4 -> 3. lstm0.w is (32, 12), lstm_proj.w (4, 8), fc0.w (3, 4)."""
    return LstmModel(vocab=4, hidden=8, projection=4, classes=3, seed=0)


@pytest.fixture
def lstm_train_plan(lstm, train_plan):
    return train_plan.replace(plan=build_toy_plan(lstm))
