import numpy as np
import pytest

from membrane import BoxDomain, assemble_precision, factorize


@pytest.fixture(scope="session")
def factor_cache():
    """Factorizations are the expensive shared resource; build each once."""
    cache = {}

    def get(n, N):
        if (n, N) not in cache:
            cache[(n, N)] = factorize(assemble_precision(BoxDomain(n, N)))
        return cache[(n, N)]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
