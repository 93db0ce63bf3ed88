import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qjumps.atom import (
    GROUND,
    IDENTITY,
    SIGMA,
    SIGMA_Y,
    SIGMA_Z,
    AtomParams,
    BlochVector,
    bloch_superoperator,
    check_state_matrix,
    hamiltonian,
    lindblad_ops,
    lindblad_rhs,
    propagate_bloch,
    propagate_master,
    stationary_bloch,
    stationary_state,
    steady_state,
    tm_diagonalize,
    trace_distance,
)
from qjumps.linalg import dag

rates = st.floats(0.05, 5.0)
drives = st.floats(0.0, 60.0)


def rk4_master(rho, atom, t, steps):
    h_, c = hamiltonian(atom), lindblad_ops(atom)
    dt = t / steps
    for _ in range(steps):
        k1 = lindblad_rhs(h_, c, rho)
        k2 = lindblad_rhs(h_, c, rho + 0.5 * dt * k1)
        k3 = lindblad_rhs(h_, c, rho + 0.5 * dt * k2)
        k4 = lindblad_rhs(h_, c, rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def random_pure(seed):
    r = np.random.default_rng(seed)
    v = r.normal(size=2) + 1j * r.normal(size=2)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def test_params_validation():
    with pytest.raises(ValueError):
        AtomParams(-1.0, 1.0)
    with pytest.raises(ValueError):
        AtomParams(1.0, float("nan"))


def test_bloch_generator_undriven():
    expected = np.array([[0, 0, 0, 0], [0, -0.5, 0, 0], [0, 0, -0.5, 0], [-1, 0, 0, -1]])
    assert np.array_equal(bloch_superoperator(AtomParams(1.0, 0.0)), expected)


@given(rates, drives)
def test_bloch_generator_preserves_trace(g, w):
    assert np.all(bloch_superoperator(AtomParams(g, w))[0] == 0)


def test_stationary_is_null_vector():
    atom = AtomParams(1.0, 10.0)
    v = stationary_bloch(atom).as_array().astype(float)
    assert np.allclose(bloch_superoperator(atom) @ v, 0, atol=1e-14)


def test_stationary_values():
    assert stationary_bloch(AtomParams(1.0, 0.0)).as_array().tolist() == [1.0, 0.0, 0.0, -1.0]
    v = stationary_bloch(AtomParams(1.0, 10.0))
    assert v.y == pytest.approx(20 / 201, abs=1e-15) and v.z == pytest.approx(-1 / 201, abs=1e-15)
    big = stationary_bloch(AtomParams(1.0, 1e6))
    assert abs(big.y) < 1e-5 and abs(big.z) < 1e-11


@given(rates, drives)
def test_stationary_matches_closed_form_and_liouvillian(g, w):
    atom = AtomParams(g, w)
    closed = (w * w * IDENTITY + w * g * SIGMA_Y + g * g * (IDENTITY - SIGMA_Z) / 2) / (2 * w * w + g * g)
    assert np.allclose(stationary_bloch(atom).to_matrix(), closed, atol=1e-12)
    assert np.allclose(stationary_state(atom), closed, atol=1e-12)
    assert np.allclose(steady_state(hamiltonian(atom), lindblad_ops(atom)), closed, atol=1e-10)


def test_tm_diagonalize_strong_driving():
    rho = (IDENTITY + 0.02 * SIGMA_Y) / 2
    ens = tm_diagonalize(rho)
    r = 1 / math.sqrt(2)
    assert np.allclose(ens.weights, (0.51, 0.49))
    assert np.allclose(ens.states[0], [r, -1j * r])
    assert np.allclose(ens.states[1], [r, 1j * r])


def test_tm_diagonalize_ground():
    ens = tm_diagonalize(np.outer(GROUND, GROUND))
    assert np.allclose(ens.weights, (1, 0)) and np.allclose(ens.states[0], GROUND)


def test_tm_diagonalize_quadratic_formula():
    rho = stationary_state(AtomParams(1.0, 2.0))
    a, d, b = rho[0, 0].real, rho[1, 1].real, rho[0, 1]
    disc = math.sqrt((a - d) ** 2 / 4 + abs(b) ** 2)
    lam = ((a + d) / 2 + disc, (a + d) / 2 - disc)
    ens = tm_diagonalize(rho)
    assert np.allclose(ens.weights, lam, atol=1e-12)
    for s, l_ in zip(ens.states, lam):
        assert np.allclose(rho @ s, l_ * s, atol=1e-12)


@given(st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_tm_reconstruction(seed, mix):
    rho = (1 - mix) * random_pure(seed) + mix * IDENTITY / 2
    assert np.abs(tm_diagonalize(rho).reconstruct() - rho).max() < 1e-12


def test_check_state_matrix_rejects():
    with pytest.raises(ValueError):
        check_state_matrix(np.diag([0.7, 0.7]))
    with pytest.raises(ValueError):
        check_state_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        check_state_matrix(SIGMA + IDENTITY / 2)


class TestPropagation:
    def test_identity_at_zero(self):
        rho = random_pure(3)
        assert np.allclose(propagate_master(rho, AtomParams(1.0, 5.0), 0.0), rho)

    def test_long_time_limit(self):
        atom = AtomParams(1.0, 10.0)
        v = propagate_bloch(np.array([1, 0, 0, -1.0]), atom, 1e3)
        assert np.allclose(v, stationary_bloch(atom).as_array().astype(float), atol=1e-9)

    def test_against_rk4(self):
        atom = AtomParams(1.0, 10.0)
        rho0 = np.outer(GROUND, GROUND).astype(complex)
        ref = rk4_master(rho0, atom, 0.1, 100_000)
        assert np.abs(propagate_master(rho0, atom, 0.1) - ref).max() < 1e-8

    def test_negative_time(self):
        with pytest.raises(ValueError):
            propagate_master(random_pure(0), AtomParams(), -1.0)

    @given(st.integers(0, 10**6), rates, drives, st.floats(0.0, 50.0))
    def test_trace_hermiticity_and_norm(self, seed, g, w, t):
        atom = AtomParams(g, w)
        rho = propagate_master(random_pure(seed), atom, t)
        assert abs(np.trace(rho) - 1) < 1e-10
        assert np.abs(rho - dag(rho)).max() < 1e-10
        assert BlochVector.from_matrix(rho).length <= 1 + 1e-10


def test_trace_distance():
    a = np.outer(GROUND, GROUND)
    assert trace_distance(a, a) == 0
    assert trace_distance(a, np.diag([0, 1])) == pytest.approx(1.0)
