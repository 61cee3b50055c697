import numpy as np
import pytest

from narforecast import (SCENARIOS, embed_lags, fit_normalizer, generate_synthetic,
                         plan_division)


@pytest.fixture(scope="session")
def synthetic_6312():
    return generate_synthetic(6312, seed=1)


@pytest.fixture(scope="session")
def small_problem():
    """A short noisy series, embedded with d=2 and divided 50/25/25."""
    ds = generate_synthetic(600, seed=7)
    norm = fit_normalizer(ds.values)
    reg = embed_lags(ds, 2, norm)
    plan = plan_division(reg.n_targets, SCENARIOS["scenario5"], seed=3)
    return ds, reg, plan


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for the acceptance summary."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
