import os

import pytest
from hypothesis import HealthCheck, settings

from tentdyn.tent import TentMap, resolve_slope

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_map(spec: str, bits: int = 256) -> TentMap:
    slope, hint, label = resolve_slope(spec, bits)
    return TentMap(slope, bits, hint, label)


@pytest.fixture(scope="session")
def golden():
    return make_map("golden")


@pytest.fixture(scope="session")
def t18():
    return make_map("1.8")
