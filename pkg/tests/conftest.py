import pytest

from envadapt.experiment import build_catalog, run_all_comparisons
from envadapt.settings import LoopConfig
from envadapt.signals import SamplingConfig


@pytest.fixture(scope="session")
def catalog():
    return build_catalog()


@pytest.fixture(scope="session")
def full_sampling():
    return SamplingConfig()


@pytest.fixture(scope="session")
def summary():
    """One default 96-trial comparison shared across modules."""
    return run_all_comparisons(SamplingConfig(), LoopConfig(), build_catalog())
