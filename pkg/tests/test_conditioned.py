import math
import warnings

import numpy as np
import pytest
import scipy.integrate
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from qjumps.atom import SIGMA, AtomParams, BlochVector, stationary_bloch
from qjumps.conditioned import (
    conditioned_state,
    conditioned_state_full,
    narrow_cavity_limit,
    rho1_source,
    sigma_rho_source,
    transit_average_x,
)
from qjumps.filters import FilterConfig, RegimeWarning, epsilon_app_perturbative, optimal_linewidth


def test_source_vectors_match_matrix_products():
    rng = np.random.default_rng(0)
    r0 = stationary_bloch(AtomParams(1.0, 3.0)).as_array().astype(float)
    rho0 = BlochVector.from_array(r0).to_matrix()
    assert np.allclose(sigma_rho_source(r0), BlochVector.from_matrix(SIGMA @ rho0).as_array())
    r1 = rng.normal(size=4) + 1j * rng.normal(size=4)
    m1 = BlochVector.from_array(r1).to_matrix()
    src = m1 @ SIGMA.conj().T + SIGMA @ m1.conj().T
    assert np.allclose(rho1_source(r1), BlochVector.from_matrix(src).as_array())


@pytest.mark.parametrize("omega", [10.0, 50.0, 200.0])
@pytest.mark.parametrize("hwhm", [1.0, 8.0, 20.0])
def test_agrees_with_full_liouvillian(omega, hwhm):
    filt = FilterConfig(hwhm, omega, 3)
    chain = conditioned_state(AtomParams(1.0, omega), filt).rho2.as_array().astype(float)
    full = conditioned_state_full(AtomParams(1.0, omega), filt).as_array().astype(float)
    assert np.abs(chain - full).max() <= 1e-6


def test_epsilon_app_at_optimum():
    atom = AtomParams(1.0, 200.0)
    hw = optimal_linewidth(atom)
    res = conditioned_state(atom, FilterConfig(hw, 200.0, 1))
    assert res.epsilon_app == pytest.approx(epsilon_app_perturbative(atom, hw), rel=0.2)


def test_epsilon_app_trends():
    hw = 8.0
    vals = [conditioned_state(AtomParams(1.0, w), FilterConfig(hw, w, 1)).epsilon_app for w in (50.0, 100.0, 200.0)]
    assert vals[0] > vals[1] > vals[2]
    atom = AtomParams(1.0, 200.0)
    r = scipy.optimize.minimize_scalar(
        lambda g: conditioned_state(atom, FilterConfig(g, 200.0, 1)).epsilon_app,
        bounds=(1.0, 80.0), method="bounded",
    )
    assert 1.0 < r.x < 80.0
    assert r.x == pytest.approx(optimal_linewidth(atom), rel=0.3)


@settings(max_examples=30)
@given(st.floats(0.5, 300.0), st.floats(0.05, 50.0), st.floats(-400.0, 400.0))
def test_physical_state(omega, hwhm, det):
    res = conditioned_state(AtomParams(1.0, omega), FilterConfig(hwhm, det, 1))
    rho = res.state_matrix()
    assert abs(np.trace(rho) - 1) < 1e-10
    assert np.abs(rho - rho.conj().T).max() < 1e-10
    assert np.linalg.eigvalsh(rho).min() > -1e-10


def test_weak_decay_limit():
    weights = [conditioned_state(AtomParams(g, 10.0), FilterConfig(1.0, 10.0, 1)).rho2.p for g in (1e-2, 1e-4, 1e-6)]
    assert weights[0] > weights[1] > weights[2] and weights[2] < 1e-5
    with pytest.raises(ValueError):
        conditioned_state(AtomParams(0.0, 10.0), FilterConfig(1.0, 10.0, 1))


class TestNarrowCavity:
    def test_x_component(self):
        res = narrow_cavity_limit(AtomParams(1.0, 100.0), 0.01, 0.0)
        assert res.x == pytest.approx(-0.04, rel=0.25)
        assert res.regime_ok

    def test_lorentzian_half_width(self):
        atom = AtomParams(1.0, 100.0)
        r0 = narrow_cavity_limit(atom, 0.01, 0.0)
        r1 = narrow_cavity_limit(atom, 0.01, 0.75)
        assert r1.lorentzian / r0.lorentzian == pytest.approx(0.5)
        assert r1.weight / r0.weight == pytest.approx(0.5, rel=0.02)

    def test_regime_warning(self):
        with pytest.warns(RegimeWarning):
            narrow_cavity_limit(AtomParams(1.0, 5.0), 2.0, 0.0)


def test_transit_average():
    for G in (0.01, 0.3, 2.0):
        val, _ = scipy.integrate.quad(lambda t: -2 * G * math.exp(-2 * G * t) * math.exp(-t / 2), 0, math.inf)
        assert transit_average_x(AtomParams(1.0, 10.0), G) == pytest.approx(val, rel=1e-10)
    assert transit_average_x(AtomParams(), 1e-4) == pytest.approx(-4e-4, rel=1e-3)
