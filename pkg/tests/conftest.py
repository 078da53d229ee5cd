"""Shared fixtures: default parameters, the first validation scenario, and
the linear model at its operating point."""

import numpy as np
import pytest

from mhtes import (
    PlantConfig,
    default_params_path,
    linearize,
    load_params,
    packaged_scenario,
)


@pytest.fixture(scope="session")
def params():
    return load_params(default_params_path())


@pytest.fixture(scope="session")
def case1():
    return packaged_scenario("case1")


@pytest.fixture(scope="session")
def cfg1(params, case1):
    return PlantConfig(params, case1.mode)


@pytest.fixture(scope="session")
def lm1(case1, cfg1):
    """Linear model at the first validation scenario's operating point."""
    return linearize(case1.x0, case1.u0, case1.d0, cfg1)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260822)
