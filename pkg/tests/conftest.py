import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def solved_cache():
    """Memoized optimize_task results shared across acceptance tests."""
    from combopt import sdp
    from combopt.perfop import TaskSpec

    cache = {}

    def get(f, d, k, cone, **kw):
        key = (f, d, k, cone)
        if key not in cache:
            cache[key] = sdp.optimize_task(TaskSpec(f, d, k), cone, **kw)
        return cache[key]

    return get
