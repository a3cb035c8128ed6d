import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from levy_penalize.potentials import (
    HalfNormalCdfPotential,
    PowerPotential,
    SaturatingExpPotential,
    scaled_upper_gamma,
)

POTENTIALS = [
    PowerPotential(1.0),
    PowerPotential(0.5),
    PowerPotential(0.75),
    SaturatingExpPotential(np.sqrt(2 * 0.3)),
    HalfNormalCdfPotential(2.5),
]


def _quad_exp_tail(g, c, z):
    return integrate.quad(lambda w: np.exp(-c * w) * float(g.deriv(z + w)), 0, np.inf,
                          limit=400, epsabs=1e-13)[0]


@pytest.mark.parametrize("g", POTENTIALS, ids=lambda g: type(g).__name__)
@pytest.mark.parametrize("c,z", [(0.5, 0.0), (1.0, 0.3), (3.0, 2.0), (0.2, 7.0)])
def test_exp_tail_against_quadrature(g, c, z):
    assert float(g.exp_tail(c, z)) == pytest.approx(_quad_exp_tail(g, c, z), rel=1e-8)


@pytest.mark.parametrize("g", POTENTIALS, ids=lambda g: type(g).__name__)
@given(u0=st.floats(0, 5), du=st.floats(0.01, 5))
def test_integral_matches_quadrature(g, u0, du):
    ref = integrate.quad(lambda v: float(g(v)), u0, u0 + du, epsabs=1e-15, epsrel=1e-13,
                         limit=200)[0]
    assert float(g.integral(u0, u0 + du)) == pytest.approx(ref, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("g", POTENTIALS, ids=lambda g: type(g).__name__)
def test_potentials_vanish_at_zero_and_increase(g):
    u = np.linspace(0, 10, 400)
    v = g(u)
    assert v[0] == 0.0
    assert np.all(np.diff(v) >= 0)
    # central differences are poor where the derivative of a fractional power blows up
    inner = (u > 1.0) & (u < 9.9)
    np.testing.assert_allclose(np.gradient(v, u)[inner], g.deriv(u)[inner], rtol=2e-3)


@given(p=st.floats(0.05, 3.0), x=st.floats(0.0, 200.0))
def test_scaled_upper_gamma(p, x):
    if x <= 600:
        ref = np.exp(x) * special.gammaincc(p, x) * special.gamma(p) if x > 0 else special.gamma(p)
    else:
        ref = x ** (p - 1)
    assert scaled_upper_gamma(p, x) == pytest.approx(ref, rel=1e-9)


def test_scaled_upper_gamma_is_continuous_across_switch():
    for p in (0.5, 1.5, 2.7):
        lo, hi = scaled_upper_gamma(p, np.array([50.0, 50.0 + 1e-9]))
        assert hi == pytest.approx(lo, rel=1e-9)


def test_saturation_limits():
    assert SaturatingExpPotential(2.0).limit == 0.5
    assert HalfNormalCdfPotential(3.0)(1e6) == pytest.approx(1.0)
