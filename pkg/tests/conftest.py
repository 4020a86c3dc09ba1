import pytest

from scfreq.domain import SuperchannelPlan
from scfreq.plm import PlmModel


@pytest.fixture
def plan():
    return SuperchannelPlan.equidistant()


@pytest.fixture
def quiet_model():
    """Default link and calibration with monitoring noise switched off."""
    return PlmModel(monitor_noise_sigma=0.0)
