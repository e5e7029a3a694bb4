import pytest
from core.config import DevSettings
from services.bound_services import BoundService
from services.envelope_services import EnvelopeService
from services.saddlepoint_services import SaddlepointService
from services.simulation_services import SimulationService
from services.tradeoff_services import TradeoffService


@pytest.fixture(scope="session")
def test_settings():
    return DevSettings(WORKERS=1)


@pytest.fixture(scope="session")
def tradeoff_service(test_settings):
    return TradeoffService(test_settings)


@pytest.fixture(scope="session")
def saddlepoint_service(test_settings):
    return SaddlepointService(test_settings)


@pytest.fixture(scope="session")
def envelope_service(test_settings):
    return EnvelopeService(test_settings)


@pytest.fixture(scope="session")
def bound_service(test_settings):
    return BoundService(test_settings)


@pytest.fixture(scope="session")
def simulation_service(test_settings):
    return SimulationService(test_settings)
