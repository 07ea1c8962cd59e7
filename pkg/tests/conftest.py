import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mincomm.codebook import Prior
from mincomm.quantkernel import QuantKernel

# numba compiles on first call, so per-example deadlines are meaningless
settings.register_profile("mincomm", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("mincomm")


@pytest.fixture
def unit_prior():
    return lambda d, var=1.0: Prior.standard(d, var)


@pytest.fixture
def unit_kernel():
    return QuantKernel(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
