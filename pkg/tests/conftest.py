import pytest

from gsdmix.design import DesignSpec
from gsdmix.sub_density import Design

POCOCK = Design((100, 100), (2.18, 2.18))
THREE_STAGE = Design((98, 98, 576), (2.12, 2.01, 2.02))
ORDERED_SPEC = DesignSpec(alpha=0.05, power=0.8, alternatives=(0.3, 0.2, 0.1), alpha0_override=0.0172)


@pytest.fixture
def pocock():
    return POCOCK


@pytest.fixture
def three_stage():
    return THREE_STAGE
