import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from qjumps.atom import GROUND, EXCITED, SIGMA, AtomParams, lindblad_ops, tm_diagonalize
from qjumps.reference import (
    CENTRAL,
    LOWER,
    UPPER,
    ClassicalTrajectory,
    JumpRateMatrix,
    dressed_rates,
    simulate_dressed,
    simulate_tm,
    tm_ensemble,
    tm_rates,
    tm_rates_shifted,
    traceless_shifts,
)

R2 = 1 / math.sqrt(2)
PHI = tm_diagonalize((np.eye(2) + 0.02 * np.array([[0, 1j], [-1j, 0]])) / 2)


def random_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_tm_rates_first_order_states():
    r = tm_rates(PHI, [SIGMA]).rates
    assert np.allclose(r, 0.25)


def test_tm_rates_bare_decay():
    from qjumps.atom import DiagonalEnsemble

    ens = DiagonalEnsemble(states=(GROUND, EXCITED), weights=(0.5, 0.5))
    r = tm_rates(ens, [SIGMA]).rates
    assert r[0, 1] == pytest.approx(1.0) and np.count_nonzero(r) == 1


@settings(max_examples=100)
@given(st.integers(0, 10**6))
def test_tm_rates_unitary_mixing_invariance(seed):
    rng = np.random.default_rng(seed)
    c = [SIGMA, 0.3 * np.array([[1, 0], [0, -1]], dtype=complex)]
    u = random_unitary(rng, 2)
    mixed = [sum(u[i, j] * c[j] for j in range(2)) for i in range(2)]
    assert np.abs(tm_rates(PHI, c).rates - tm_rates(PHI, mixed).rates).max() < 1e-12


def test_shifted_rates():
    assert np.allclose(tm_rates_shifted(PHI, [SIGMA], [0.0]).rates, tm_rates(PHI, [SIGMA]).rates)
    assert not np.allclose(tm_rates_shifted(PHI, [SIGMA], [0.5]).rates, 0.25)
    assert np.allclose(tm_rates_shifted(PHI, [SIGMA], traceless_shifts([SIGMA])).rates, 0.25)
    with pytest.raises(ValueError):
        tm_rates_shifted(PHI, [SIGMA], [])


def test_rate_matrix_validation():
    with pytest.raises(ValueError):
        JumpRateMatrix(np.array([[0.0, -1.0], [0.0, 0.0]]))
    assert np.allclose(dressed_rates(AtomParams()).rates, 0.25)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        ClassicalTrajectory(np.array([1.0, 0.5]), ["a", "b"], np.array([0, 1]), 0, 0, 2.0)


def test_tm_total_rate_and_ratio():
    atom = AtomParams(1.0, 50.0)
    tr = simulate_tm(atom, 2e5 / 0.5, seed=11)
    assert len(tr) / tr.duration == pytest.approx(0.5, rel=0.01)
    labels = np.array(tr.labels)
    central = np.sum(labels == CENTRAL)
    # Mollow weights 1/2 : 1/4 : 1/4, so central is twice each sideband
    for side in (UPPER, LOWER):
        assert central / np.sum(labels == side) == pytest.approx(2.0, rel=0.03)


def test_tm_occupation_matches_rate_balance():
    atom = AtomParams(1.0, 50.0)
    tr = simulate_tm(atom, 2e5, seed=3)
    r = tm_rates(tm_ensemble(atom), lindblad_ops(atom)).rates
    p0 = r[0, 1] / (r[0, 1] + r[1, 0])
    occ = tr.occupation_times() / tr.duration
    assert occ[0] == pytest.approx(p0, abs=0.01)
    assert p0 == pytest.approx(0.5, abs=0.02)


def test_tm_no_decay():
    assert len(simulate_tm(AtomParams(0.0, 5.0), 100.0, seed=1)) == 0


def test_dressed_alternation_and_rates():
    tr = simulate_dressed(AtomParams(1.0, 50.0), 4e5, seed=5)
    side = [l for l in tr.labels if l != CENTRAL]
    assert all(a != b for a, b in zip(side, side[1:]))
    assert all(l in (UPPER, LOWER) for l in side)
    for lab, rate in tr.conditional_rates().items():
        assert rate == pytest.approx(0.25, rel=0.02), lab


def test_dressed_sideband_waiting_times_exponential():
    tr = simulate_dressed(AtomParams(1.0, 50.0), 4.2e4, seed=8)
    t = np.array([t for t, l in zip(tr.times, tr.labels) if l != CENTRAL])
    waits = np.diff(t)[:10_000]
    assert len(waits) == 10_000
    assert np.mean(waits) == pytest.approx(4.0, rel=0.03)
    assert scipy.stats.kstest(waits, "expon", args=(0, 4.0)).pvalue > 0.01


def test_dressed_empty_duration():
    assert len(simulate_dressed(AtomParams(), 0.0, seed=1)) == 0


def test_chain_determinism():
    a = simulate_dressed(AtomParams(1.0, 5.0), 100.0, seed=42)
    b = simulate_dressed(AtomParams(1.0, 5.0), 100.0, seed=42)
    assert np.array_equal(a.times, b.times) and a.labels == b.labels
