import random

import pytest

from pushsim.netmodel import LinkParams
from pushsim.pagemodel import fixture


@pytest.fixture
def p0():
    return fixture("p0")


@pytest.fixture
def p1():
    return fixture("p1")


@pytest.fixture
def p2():
    return fixture("p2")


@pytest.fixture
def link100():
    return LinkParams.from_ms_mbps(100, 100)


def random_link(rng: random.Random) -> LinkParams:
    return LinkParams(rng.uniform(0.005, 0.25), rng.uniform(8e6, 500e6))
