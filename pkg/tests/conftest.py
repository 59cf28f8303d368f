"""Shared fixtures; slow statistical checks run only with --runslow."""
from __future__ import annotations

import numpy as np
import pytest

from sas_pipeline.dataset import Dataset, Splits
from sas_pipeline.graph import build_graph
from sas_pipeline.log_utils import detach_file_logs
from sas_pipeline.models import MlpShape, PipelineSpec, SynthConfig, TrainConfig
from sas_pipeline.synthgen import generate


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the slow reproduction checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: many seeded training runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    monkeypatch.setenv("SAS_OUTPUT_ROOT", str(tmp_path / "outputs"))
    monkeypatch.delenv("SAS_WORKERS", raising=False)
    yield
    detach_file_logs()


def random_graph(rng: np.random.Generator, n: int, p: float):
    upper = np.triu(rng.random((n, n)) < p, k=1)
    edges = np.argwhere(upper)
    return build_graph(edges, n)


@pytest.fixture
def path_graph():
    """0 – 1 – 2 – 3"""
    return build_graph([(0, 1), (1, 2), (2, 3)], 4)


@pytest.fixture
def small_xor():
    """A quick XOR dataset with a validation split."""
    return generate(SynthConfig(kind="xor", n_train=60, n_val=40, n_test=200, seed=3))


@pytest.fixture
def fast_train():
    return TrainConfig(epochs=60, seed=0)


@pytest.fixture
def toy_dataset():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(12, 3))
    y = np.array([0, 1, 2] * 4)
    splits = Splits(train=[0, 1, 2, 3, 4, 5], val=[6, 7, 8], test=[9, 10, 11])
    return Dataset(x, y, 3, splits, name="toy")


@pytest.fixture
def quick_spec(fast_train):
    def _make(steps: str, **kw) -> PipelineSpec:
        return PipelineSpec(steps=steps, mlp=MlpShape(hidden_dim=8), train=fast_train, **kw)
    return _make
