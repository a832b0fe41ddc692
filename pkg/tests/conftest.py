import pytest

from ldacert import field


@pytest.fixture(scope="session")
def gauss_F():
    """Functionals of the unit gaussian, closed form."""
    return field.functionals(field.Density.gaussian(1.0, 1.0))
