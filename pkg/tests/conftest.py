import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from metroq.channels import make_ad_channel

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def ad_half():
    return make_ad_channel(0.5, 1.0)


def rand_herm(rng, n):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return g + g.conj().T


def rand_psd(rng, n, rank=None):
    g = rng.standard_normal((n, rank or n)) + 1j * rng.standard_normal((n, rank or n))
    return g @ g.conj().T


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(mod.VERDICTS, key=int):
        for ok, detail in mod.VERDICTS[key]:
            tr.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
