import math

import pytest

from ldacert import bounds, field


def test_tf_constant_two_routes():
    assert bounds.c_tf(3) == pytest.approx(bounds.c_tf3_product_form(), rel=1e-12)
    assert bounds.c_tf(3) == pytest.approx(9.115599744691195, rel=1e-12)


def test_lieb_oxford_gradient_constant():
    assert bounds.C_LO_GRAD == pytest.approx(1.4508, abs=5e-5)
    assert bounds.C_LO_GRAD == pytest.approx(
        0.6 * (4.5 * math.pi) ** (1.0 / 3.0), rel=1e-15)


def test_dirac_coefficient():
    assert bounds.b_dirac(1) == pytest.approx(-0.7385587663820223, rel=1e-12)
    # spin-q scaling is q^{-1/3}
    assert bounds.b_dirac(2) == pytest.approx(bounds.b_dirac(1) / 2 ** (1.0 / 3.0))


def test_constants_table_keys():
    table = bounds.constants_table()
    for key in ("c_tf", "c_lo", "c_lo_grad", "b_dirac"):
        assert key in table


def test_models(gauss_F):
    td = bounds.tf_dirac_model(1)
    to = bounds.tf_only_model(1)
    assert td.A == pytest.approx(bounds.c_tf(3))
    assert td.B == pytest.approx(bounds.b_dirac(1))
    assert to.B == 0.0
    cm = bounds.custom_model(2.0, -0.5)
    assert cm.e(1.0) == pytest.approx(1.5)
    assert cm.c_ueg == -0.5


def test_lda_energy_gaussian(gauss_F):
    got = bounds.lda_energy(gauss_F, bounds.tf_dirac_model(1))
    assert got == pytest.approx(0.4828917435303063, rel=1e-12)
    # ballpark pinned independently: A*0.073968 + B*0.25911
    assert got == pytest.approx(0.4828, rel=1e-2)


def test_energy_lower_flags(gauss_F):
    v1, conjectured = bounds.energy_lower(gauss_F)
    assert conjectured is True
    v2, flag2 = bounds.energy_lower(gauss_F, c_lt=1.0)
    assert flag2 is False
    assert v2 < v1


def test_energy_upper_min_gaussian(gauss_F):
    val, eps = bounds.energy_upper_min(gauss_F)
    assert val == pytest.approx(67.70648980405888, rel=1e-8)
    assert eps > 0.0
    # the refined minimum beats nearby evaluations
    assert val <= bounds.energy_upper(gauss_F, eps * 1.01) + 1e-12
    assert val <= bounds.energy_upper(gauss_F, eps * 0.99) + 1e-12


def test_sandwich_on_gaussian(gauss_F):
    lo, _ = bounds.energy_lower(gauss_F)
    hi, _ = bounds.energy_upper_min(gauss_F)
    assert lo <= hi


def test_e_envelope_bracket():
    lo, hi = bounds.e_envelope(2.0)
    assert lo == pytest.approx(-bounds.C_LO * 2.0 ** (4.0 / 3.0))
    assert hi == pytest.approx(bounds.c_tf(3) * 2.0 ** (5.0 / 3.0))
    assert lo <= hi


def test_lieb_oxford_gradient_bound(gauss_F):
    val, improves = bounds.lieb_oxford_gradient_bound(gauss_F, 0.1)
    assert val > 0.0
    assert isinstance(improves, bool)
    with pytest.raises(ValueError):
        bounds.lieb_oxford_gradient_bound(gauss_F, 0.0)
