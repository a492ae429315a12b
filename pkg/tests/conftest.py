import numpy as np
import pytest

from gapflow.models import tfim


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope='session')
def tfim6():
    return tfim(6)


@pytest.fixture(scope='session')
def tfim8():
    return tfim(8)


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.setenv('GAPFLOW_WORKERS', '1')
