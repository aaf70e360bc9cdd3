import functools
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from renorm.fixpoint import solve  # noqa: E402


@functools.lru_cache(maxsize=None)
def _solved(p, r, nu, test_mode=False):
    return solve(p, r, nu, test_mode=test_mode)


# one point per regime plus the edge cases the suite leans on
POINTS = {
    "feigenbaum": (1, 2.0, 1.0),
    "tripling": (2, 2.0, 1.0),
    "low_nu_p1": (1, 2.0, 0.8),
    "low_nu_p3": (3, 5.0, 0.5),
    "p1_high_nu": (1, 3.0, 2.0),
    "pge2_high_nu": (2, 2.0, 2.0),
    "pge2_truncated": (2, 1.5, 1.2),
}


@pytest.fixture(scope="session")
def get_bundle():
    def get(name_or_point, test_mode=False):
        pt = POINTS.get(name_or_point, name_or_point)
        return _solved(*pt, test_mode=test_mode)[0]
    return get


@pytest.fixture(scope="session")
def get_solve():
    def get(p, r, nu, test_mode=False):
        return _solved(p, r, nu, test_mode)
    return get
