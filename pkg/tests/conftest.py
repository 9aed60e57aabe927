import pytest
import numpy as np
from poolcast.calendar import ServiceCalendar
from poolcast.config import PUBLIC_HOLIDAYS, SCHOOL_HOLIDAYS, DAY_TYPE_OVERRIDES
from poolcast.flow_model import FlowParams
from poolcast.inference import McmcConfig


@pytest.fixture
def ord_calendar():
    """ factory: n ORD days starting on a Monday """
    def make(n, start="2018-01-08"):
        return ServiceCalendar(start, ["ORD"] * n)
    return make


@pytest.fixture
def lyon_calendar():
    """ factory: n days typed with the built-in holiday tables """
    def make(n, start="2018-01-01"):
        return ServiceCalendar.from_holidays(start, n, PUBLIC_HOLIDAYS, SCHOOL_HOLIDAYS, DAY_TYPE_OVERRIDES)
    return make


@pytest.fixture
def sim_params():
    return FlowParams.from_theta([0.333, 0.33, 0.331, 1.0, 1.0, 1.0], 5.0)


@pytest.fixture
def quick_mcmc():
    return McmcConfig(chains=2, warmup_iters=500, keep_iters=500, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
