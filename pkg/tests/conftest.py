"""Shared fixtures: small Monte-Carlo moment tables and throwaway run directories."""

import numpy as np
import pytest

from qgain.tools.moment_cache import MomentCache
from qgain.tools.order_stats import MomentMethod, build_moment_table

# Enough samples for the validator at λ ≤ 20, small enough to keep the suite quick
TEST_SAMPLES = 200_000


def mc_table(lam: int, samples: int = TEST_SAMPLES, seed: int = 1):
    return build_moment_table(lam, MomentMethod.MONTE_CARLO, with_e2=True, samples=samples, seed=seed)


@pytest.fixture(scope="session")
def moments2():
    return mc_table(2, samples=20_000)


@pytest.fixture(scope="session")
def moments4():
    return mc_table(4)


@pytest.fixture(scope="session")
def moments10():
    return mc_table(10)


@pytest.fixture(scope="session")
def moments20():
    return mc_table(20)


@pytest.fixture(scope="session")
def mc_source():
    """Moment source serving cached test tables, e2 always from Monte Carlo."""
    tables = {}

    def source(lam: int, with_e2: bool):
        if lam not in tables:
            tables[lam] = mc_table(lam, samples=50_000)
        return tables[lam]

    return source


@pytest.fixture
def cache(tmp_path):
    return MomentCache(tmp_path / "cache")


@pytest.fixture
def run_dirs(tmp_path, monkeypatch):
    """Overrides pointing a run at temporary output and cache directories."""
    monkeypatch.delenv("QGAIN_CACHE_DIR", raising=False)
    monkeypatch.delenv("QGAIN_WORKERS", raising=False)
    return {
        "output_dir": str(tmp_path / "out"),
        "cache_dir": str(tmp_path / "cache"),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
