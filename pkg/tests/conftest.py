import pytest

from plumeshine.nuclides import load_default_db


@pytest.fixture(scope="session")
def db():
    return load_default_db()
