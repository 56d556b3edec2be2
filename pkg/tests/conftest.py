import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from specmon.experiments import BandSetup
from specmon.ring import device_ring

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"
F_1545 = 299_792_458.0 / 1545e-9


@pytest.fixture(scope="session")
def golden_ring():
    return json.loads((DATA / "golden_ring.json").read_text())


@pytest.fixture(scope="session")
def device():
    """Dispersive ring at the measured geometry, calibrated to 1.30 GHz."""
    return device_ring(F_1545)


@pytest.fixture(scope="session")
def rc2():
    """M=2, 25 GHz raised-cosine channels on 50 GHz."""
    return BandSetup.fig2(25e9, "raised_cosine")


@pytest.fixture(scope="session")
def gauss20():
    return BandSetup.fig2(20e9, "gaussian")


@pytest.fixture(scope="session")
def rc3():
    """M=3, 17 GHz raised-cosine channels on 51 GHz."""
    return BandSetup.fig4(17e9)
