import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qjumps import linalg
from qjumps.atom import SIGMA, SIGMA_X, SIGMA_Z, AtomParams
from qjumps.filters import FilterConfig, build_one_filter, build_two_filter, sideband_filters
from qjumps.linalg import dag, eig_general, expm, kron, partial_trace, solve_linear

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def cmat(n, m=None):
    m = n if m is None else m
    return st.builds(
        lambda a, b: a + 1j * b, arrays(float, (n, m), elements=finite), arrays(float, (n, m), elements=finite)
    )


def kron_loop(a, b):
    p, q = b.shape
    out = np.zeros((a.shape[0] * p, a.shape[1] * q), dtype=complex)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            for k in range(p):
                for l in range(q):
                    out[i * p + k, j * q + l] = a[i, j] * b[k, l]
    return out


def gauss_solve(a, b):
    a = np.array(a, dtype=complex)
    b = np.array(b, dtype=complex)
    n = len(b)
    for c in range(n):
        piv = c + int(np.argmax(np.abs(a[c:, c])))
        a[[c, piv]], b[[c, piv]] = a[[piv, c]], b[[piv, c]]
        for r in range(c + 1, n):
            f = a[r, c] / a[c, c]
            a[r, c:] -= f * a[c, c:]
            b[r] -= f * b[c]
    x = np.zeros(n, dtype=complex)
    for r in range(n - 1, -1, -1):
        x[r] = (b[r] - a[r, r + 1:] @ x[r + 1:]) / a[r, r]
    return x


def series_expm(m, t, steps):
    h = t / steps
    mh = m * h
    step = np.eye(len(m)) + mh + mh @ mh / 2 + mh @ mh @ mh / 6 + mh @ mh @ mh @ mh / 24
    return np.linalg.matrix_power(step, steps)


class TestKron:
    def test_identity(self):
        assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_diagonal(self):
        z = np.diag([1, -1])
        assert np.array_equal(kron(z, np.eye(2)), np.diag([1, 1, -1, -1]))

    def test_matches_index_loop(self):
        a = np.diag(np.sqrt([1, 2]), 1)
        assert np.allclose(kron(SIGMA, a), kron_loop(SIGMA, a))

    @given(cmat(2), cmat(3), cmat(2))
    def test_associative(self, a, b, c):
        assert np.allclose(kron(kron(a, b), c), kron(a, kron(b, c)))

    @given(cmat(2), cmat(2), cmat(3), st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
    def test_bilinear(self, a, a2, b, s):
        assert np.allclose(kron(a + s * a2, b), kron(a, b) + s * kron(a2, b))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            kron()


class TestEig:
    def test_diagonal(self):
        r = eig_general(np.diag([1, 2j]))
        assert sorted(r.values, key=abs) == [1, 2j]
        assert not r.defective

    def test_jordan_block_is_flagged(self):
        r = eig_general(SIGMA)
        assert r.defective
        assert len(r.values) == 1 and abs(r.values[0]) < 1e-12

    @given(cmat(4))
    def test_trace_sum(self, m):
        r = eig_general(m)
        if not r.defective:
            assert abs(r.values.sum() - np.trace(m)) <= 1e-9 * max(1.0, np.abs(m).sum())

    @given(cmat(4))
    def test_unit_vectors_and_residual(self, m):
        r = eig_general(m)
        assert np.allclose(np.linalg.norm(r.vectors, axis=0), 1)
        res = np.linalg.norm(m @ r.vectors - r.vectors * r.values, axis=0)
        assert res.max() <= 1e-9 * max(1.0, np.linalg.norm(m, 2))

    def test_two_filter_generator_slow_pair(self):
        from qjumps.filters import atomic_basis

        atom = AtomParams(1.0, 50.0)
        sys = build_two_filter(atom, *sideband_filters(atom, 8.0, n_max=1))
        vals = eig_general(sys.generator).values
        b = atomic_basis(atom)
        for target in (b.lam_h, b.lam_l):
            assert np.min(np.abs(vals - target)) < 1e-6 * 50
        # strong-driving form -g/4 -+ i W/2 holds to O(g^2 / W)
        for target in (-0.25 - 25j, -0.25 + 25j):
            assert np.min(np.abs(vals - target)) < 1.0 / (8 * 50)

    def test_size_limit(self):
        with pytest.raises(ValueError):
            eig_general(np.eye(linalg.MAX_DIM + 1))


class TestSolve:
    def test_identity(self):
        b = np.array([1.0, 2.0, 3.0])
        assert np.allclose(solve_linear(np.eye(3), b), b)

    def test_diagonal(self):
        assert np.allclose(solve_linear(np.diag([2.0, 4.0]), [2.0, 4.0]), [1.0, 1.0])

    def test_singular(self):
        with pytest.raises(linalg.SingularMatrixError):
            solve_linear(np.ones((2, 2)), [1.0, 1.0])

    def test_resolvent_against_elimination(self):
        from qjumps.atom import bloch_superoperator, stationary_bloch
        from qjumps.conditioned import sigma_rho_source

        atom = AtomParams(1.0, 10.0)
        m = bloch_superoperator(atom) - (10j + 1.0) * np.eye(4)
        src = sigma_rho_source(stationary_bloch(atom).as_array().astype(float))
        assert np.allclose(solve_linear(m, src), gauss_solve(m, src), atol=1e-10)

    @given(cmat(3), arrays(float, 3, elements=finite))
    def test_random_against_elimination(self, m, b):
        m = m + 8 * np.eye(3)
        assert np.allclose(solve_linear(m, b), gauss_solve(m, b), atol=1e-10)


class TestExpm:
    def test_zero(self):
        assert np.allclose(expm(np.zeros((3, 3))), np.eye(3))

    def test_pauli_rotation(self):
        assert np.allclose(expm(0.5j * np.pi * SIGMA_X), 1j * SIGMA_X, atol=1e-14)

    def test_no_jump_generator_against_series(self):
        g = -0.5j * 10 * SIGMA_X - 0.5 * dag(SIGMA) @ SIGMA
        assert np.allclose(expm(g), series_expm(g, 1.0, 10_000), atol=1e-8)

    @given(cmat(3))
    def test_inverse(self, m):
        assert np.allclose(expm(m) @ expm(-m), np.eye(3), atol=1e-9 * max(1, np.abs(expm(m)).max() ** 2))

    def test_overflow_guard(self):
        with pytest.raises(OverflowError):
            expm(2000 * np.eye(2))

    def test_large_dissipative_is_fine(self):
        out = expm(-2000 * np.eye(2))
        assert np.all(np.isfinite(out))


class TestPartialTrace:
    def test_product(self, rng):
        from conftest import random_state_matrix

        a = random_state_matrix(rng, 2)
        b = 0.7 * random_state_matrix(rng, 3)
        assert np.allclose(partial_trace(kron(a, b), (2, 3), 0), a * np.trace(b))
        assert np.allclose(partial_trace(kron(a, b), (2, 3), 1), b)

    def test_dressed_vacuum(self):
        minus = np.array([1, -1]) / np.sqrt(2)
        v = np.kron(minus, [1, 0, 0])
        assert np.allclose(partial_trace(np.outer(v, v), (2, 3), 0), np.outer(minus, minus))

    @given(st.integers(0, 10_000))
    def test_hermitian_unit_trace(self, seed):
        from conftest import random_state_matrix

        rho = random_state_matrix(np.random.default_rng(seed), 6)
        for keep in (0, 1):
            r = partial_trace(rho, (2, 3), keep)
            assert abs(np.trace(r) - 1) < 1e-12
            assert np.abs(r - dag(r)).max() < 1e-12

    def test_photon_number_oracle(self):
        from qjumps.atom import steady_state

        sys = build_one_filter(AtomParams(1.0, 10.0), FilterConfig(1.0, 10.0, 3))
        w = steady_state(sys.hamiltonian(), sys.lindblad_ops())
        a = sys.ops["a"]
        red = partial_trace(a @ w @ dag(a), sys.dims, 0)
        assert abs(np.trace(red) - np.trace(dag(a) @ a @ w)) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            partial_trace(np.eye(5), (2, 3), 0)
