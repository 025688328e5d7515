from __future__ import annotations

import pytest

from parisian_impulse import find_optimal_policy
from parisian_impulse.parisian import parisian_scale

from params import brownian_spec, cramer_lundberg_spec


@pytest.fixture(scope="session")
def bm_spec():
    return brownian_spec()


@pytest.fixture(scope="session")
def cl_spec():
    return cramer_lundberg_spec()


@pytest.fixture(scope="session")
def bm_scale(bm_spec):
    return parisian_scale(bm_spec)


@pytest.fixture(scope="session")
def cl_scale(cl_spec):
    return parisian_scale(cl_spec)


@pytest.fixture(scope="session")
def optimum():
    """Memoized optimizer runs, keyed by spec (the search is deterministic)."""
    cache = {}

    def get(spec):
        if spec not in cache:
            cache[spec] = find_optimal_policy(parisian_scale(spec))
        return cache[spec]

    return get
