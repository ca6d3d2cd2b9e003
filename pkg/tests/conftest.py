import pytest

from nfiekf.sim import SimConfig, run_benchmark


@pytest.fixture(scope="session")
def default_benchmark():
    """The 30-run default benchmark, shared by the sim and acceptance tests."""
    return run_benchmark(SimConfig())
