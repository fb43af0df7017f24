import pytest

from bandwagon.model import constant_model, crowding_model


@pytest.fixture(scope="session")
def low():
    return constant_model(1.0, 0.1)


@pytest.fixture(scope="session")
def high():
    return constant_model(1.0, 1.0)


@pytest.fixture(scope="session")
def crowd():
    return crowding_model(0.5, 4.6, 0.5)


@pytest.fixture(scope="session")
def crowd_cycle(crowd):
    from bandwagon.phase import find_limit_cycle

    return find_limit_cycle(crowd)


@pytest.fixture(scope="session")
def eq_low(low):
    from bandwagon.mfg import enumerate_equilibria

    return enumerate_equilibria(low, -0.5)


@pytest.fixture(scope="session")
def eq_high(high):
    from bandwagon.mfg import enumerate_equilibria

    return enumerate_equilibria(high, 0.05)


@pytest.fixture(scope="session")
def eq_crowd(crowd, crowd_cycle):
    from bandwagon.mfg import enumerate_equilibria

    return enumerate_equilibria(crowd, 0.05, cycle_search=crowd_cycle)
