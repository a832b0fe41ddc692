"""Certified error bounds for local-density energy approximations."""

__version__ = "0.1.0"

from .field import (  # noqa: F401
    Density,
    FunctionalSet,
    GridSpec,
    ScalarField,
    functionals,
    integrate,
    read_grid,
    scale_functionals,
    write_grid,
)
