import math

import numpy as np
import pytest

from ldacert import field

GAUSS_EXACT = {
    "mass": 1.0,
    "l2": 0.02244839026564582,
    "l43": 0.2591206121035017,
    "l53": 0.07396853328737997,
    "kin": 0.75,
    "tv": 1.5957691216057308,
    "thg": 0.005261341468510738,
}


def test_gaussian_closed_forms(gauss_F):
    for name, want in GAUSS_EXACT.items():
        assert getattr(gauss_F, name) == pytest.approx(want, rel=1e-12), name
    assert gauss_F.theta == 0.5 and gauss_F.p == 4.0
    assert gauss_F.hartree is None


def test_gaussian_kin_formula():
    # kin = 3/(4 sigma^2), independent of mass normalization
    for sigma, mass in ((0.5, 1.0), (2.0, 3.0)):
        F = field.functionals(field.Density.gaussian(sigma, mass))
        assert F.kin == pytest.approx(mass * 0.75 / sigma**2, rel=1e-12)


@pytest.mark.parametrize("c", [0.3, 2.0, 17.5])
def test_amplitude_power_scaling(c):
    base = field.functionals(field.Density.gaussian(1.0, 1.0))
    scaled = field.functionals(field.Density.gaussian(1.0, c))
    assert scaled.mass == pytest.approx(c * base.mass, rel=1e-10)
    assert scaled.l2 == pytest.approx(c**2 * base.l2, rel=1e-10)
    assert scaled.l43 == pytest.approx(c ** (4.0 / 3.0) * base.l43, rel=1e-10)
    assert scaled.l53 == pytest.approx(c ** (5.0 / 3.0) * base.l53, rel=1e-10)


def test_dilation_scaling_matches_closed_form():
    """scale_functionals must agree with functionals of the dilated density.

    The dilation rho(x / N^{1/3}) of a gaussian is the gaussian with
    sigma -> sigma N^{1/3} and mass -> N mass.
    """
    N = 640.0
    want = field.scale_functionals(
        field.functionals(field.Density.gaussian(1.0, 1.0)), N)
    got = field.functionals(field.Density.gaussian(N ** (1.0 / 3.0), N))
    for name in ("mass", "l2", "l43", "l53", "kin", "tv", "thg"):
        assert getattr(got, name) == pytest.approx(getattr(want, name), rel=1e-10)


def test_scale_functionals_powers(gauss_F):
    N = 8.0
    S = field.scale_functionals(gauss_F, N)
    assert S.mass == pytest.approx(N * gauss_F.mass)
    assert S.kin == pytest.approx(N ** (1.0 / 3.0) * gauss_F.kin)
    assert S.tv == pytest.approx(N ** (2.0 / 3.0) * gauss_F.tv)
    assert S.thg == pytest.approx(N ** (1.0 - 4.0 / 3.0) * gauss_F.thg)
    with pytest.raises(ValueError):
        field.scale_functionals(gauss_F, 0.0)


def test_compact_bump_mass_and_support():
    rho = field.Density.compact_bump(1.5, 2.0)
    F = field.functionals(rho)
    assert F.mass == pytest.approx(2.0, rel=1e-9)
    spec = field.GridSpec((3, 3, 3), (1.0, 1.0, 1.0), (-1.0, -1.0, -1.0))
    vals = field.density_to_field(rho, spec).values
    assert vals.min() >= 0.0


def test_smeared_tetra_mass():
    # the smeared tile has the same volume as the sharp one: rho0 ell^3/24
    F = field.functionals(field.Density.smeared_tetra(1.0, 6.0, 1.5))
    assert F.mass == pytest.approx(6.0**3 / 24.0, rel=1e-4)


def test_gaussian_hartree_value():
    assert field.gaussian_hartree(1.0, 1.0) == pytest.approx(
        1.0 / (2.0 * math.sqrt(math.pi)), rel=1e-14)
    assert field.gaussian_hartree(2.0, 3.0) == pytest.approx(
        9.0 / (2.0 * math.sqrt(math.pi) * 2.0), rel=1e-14)


def test_grid_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    spec = field.GridSpec((4, 5, 6), (0.5, 0.25, 0.125), (-1.0, 0.0, 2.0))
    f = field.ScalarField(spec=spec, values=rng.uniform(size=(4, 5, 6)))
    path = tmp_path / "a.grid"
    field.write_grid(f, path)
    g = field.read_grid(path)
    assert g.spec == spec
    np.testing.assert_array_equal(g.values, f.values)
    # a second write of the reread field is byte-identical
    path2 = tmp_path / "b.grid"
    field.write_grid(g, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_read_grid_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.grid"
    p.write_text("NOT-A-GRID v9 1 1 1\n0.0\n")
    with pytest.raises(field.GridFormatError):
        field.read_grid(p)


def test_grid_density_spec_mismatch():
    rho = field.Density.gaussian(1.0, 1.0)
    spec = field.default_grid(rho, 24)
    grid_rho = field.Density.grid(field.density_to_field(rho, spec))
    other = field.GridSpec((8, 8, 8), (1.0, 1.0, 1.0), (-4.0, -4.0, -4.0))
    with pytest.raises(ValueError):
        field.density_to_field(grid_rho, other)


def test_integrate_constant():
    spec = field.GridSpec((10, 10, 10), (0.1, 0.1, 0.1), (0.0, 0.0, 0.0))
    f = field.ScalarField(spec=spec, values=np.ones((10, 10, 10)))
    assert field.integrate(f) == pytest.approx(1.0, rel=1e-12)


def test_sobolev_ratio_preconditions():
    spec = field.GridSpec((25, 25, 25), (0.05, 0.05, 0.05), (-0.6, -0.6, -0.6))
    X, Y, Z = spec.meshgrid()
    u = field.ScalarField(spec=spec, values=X)  # vanishes on the x=0 plane
    r = field.sobolev_ratio(u, 4.0, 1.0)
    assert r > 0.0
    with pytest.raises(ValueError):
        field.sobolev_ratio(u, 3.0, 1.0)
    ones = field.ScalarField(spec=spec, values=np.ones(spec.dims))
    with pytest.raises(field.PreconditionError):
        field.sobolev_ratio(ones, 4.0, 1.0)


def test_sobolev_ratio_zero_field():
    spec = field.GridSpec((25, 25, 25), (0.05, 0.05, 0.05), (-0.6, -0.6, -0.6))
    z = field.ScalarField(spec=spec, values=np.zeros(spec.dims))
    assert field.sobolev_ratio(z, 4.0, 1.0) == 0.0
