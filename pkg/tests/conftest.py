import pytest

from spdzbio.field import DEFAULT_PRIME, FieldParams


@pytest.fixture(scope="session")
def big():
    return FieldParams(DEFAULT_PRIME)


@pytest.fixture(scope="session")
def small():
    return FieldParams(65521)


@pytest.fixture(scope="session")
def tiny():
    return FieldParams(251)
