"""The resonantly driven, damped two-level atom.

Basis ordering is ``(|g>, |e>)``; the lowering operator is ``sigma = |g><e|``
and ``sigma_z = |e><e| - |g><g|``.  With this choice the interaction-picture
master equation

    d rho/dt = -i (Omega/2) [sigma_x, rho] + gamma D[sigma] rho

has the Bloch equations ``dy/dt = -gamma y/2 - Omega z`` and
``dz/dt = -gamma (p + z) + Omega y``, and the stationary state is tilted
towards ``+sigma_y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import dag, expm

SIGMA = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

GROUND = np.array([1, 0], dtype=complex)
EXCITED = np.array([0, 1], dtype=complex)
# dressed states, eigenstates of sigma_x
PLUS = np.array([1, 1], dtype=complex) / math.sqrt(2)
MINUS = np.array([1, -1], dtype=complex) / math.sqrt(2)

STATE_TOL = 1e-12
POSITIVITY_TOL = -1e-10


@dataclass(frozen=True)
class AtomParams:
    """Spontaneous emission rate ``gamma`` and Rabi frequency ``omega``."""

    gamma: float = 1.0
    omega: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.omega)):
            raise ValueError("atom parameters must be finite")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.omega < 0:
            raise ValueError(f"omega must be non-negative, got {self.omega}")

    @property
    def rate_scale(self) -> float:
        return max(self.gamma, self.omega)


@dataclass(frozen=True)
class BlochVector:
    """Components of ``rho = (p I + x sx + y sy + z sz)/2``.

    Components may be complex when the vector represents a non-Hermitian
    operator such as ``Tr_cav[a W]``.
    """

    p: complex
    x: complex
    y: complex
    z: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.x, self.y, self.z])

    @classmethod
    def from_array(cls, v) -> "BlochVector":
        v = np.asarray(v)
        comps = [complex(c) for c in v]
        if all(abs(c.imag) == 0.0 for c in comps):
            comps = [c.real for c in comps]
        return cls(*comps)

    def to_matrix(self) -> np.ndarray:
        return 0.5 * (self.p * IDENTITY + self.x * SIGMA_X + self.y * SIGMA_Y + self.z * SIGMA_Z)

    @classmethod
    def from_matrix(cls, m) -> "BlochVector":
        m = np.asarray(m, dtype=complex)
        comps = [np.trace(m @ s) for s in (IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z)]
        if all(abs(c.imag) <= 1e-14 * max(1.0, abs(c)) for c in comps):
            comps = [c.real for c in comps]
        return cls(*comps)

    @property
    def length(self) -> float:
        v = self.as_array()[1:]
        return float(np.sqrt(np.sum(np.abs(v) ** 2)))


@dataclass(frozen=True)
class DiagonalEnsemble:
    """Eigen-decomposition ``rho = sum_mu p_mu |phi_mu><phi_mu|``."""

    states: tuple
    weights: tuple
    degenerate: bool = False

    def reconstruct(self) -> np.ndarray:
        return sum(w * np.outer(s, s.conj()) for s, w in zip(self.states, self.weights))


def check_state_matrix(rho, tol=STATE_TOL) -> np.ndarray:
    """Validate a physical state matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("state matrix must be square")
    if np.max(np.abs(rho - dag(rho))) > tol:
        raise ValueError("state matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ValueError(f"state matrix trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min() < POSITIVITY_TOL:
        raise ValueError("state matrix has a negative eigenvalue")
    return rho


def hamiltonian(params: AtomParams) -> np.ndarray:
    return 0.5 * params.omega * SIGMA_X


def lindblad_ops(params: AtomParams) -> list:
    return [math.sqrt(params.gamma) * SIGMA]


def lindblad_rhs(h, c_ops, rho) -> np.ndarray:
    """Right-hand side ``-i[H, rho] + sum_j D[c_j] rho``."""
    out = -1j * (h @ rho - rho @ h)
    for c in c_ops:
        cd = dag(c)
        cdc = cd @ c
        out += c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)
    return out


def liouvillian(h, c_ops) -> np.ndarray:
    """Superoperator matrix acting on row-major ``rho.ravel()``."""
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    eye = np.eye(d)
    out = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in c_ops:
        c = np.asarray(c, dtype=complex)
        cdc = dag(c) @ c
        out += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return out


def steady_state(h, c_ops) -> np.ndarray:
    """Unit-trace null vector of the Liouvillian, by SVD."""
    d = np.asarray(h).shape[0]
    lv = liouvillian(h, c_ops)
    _, s, vh = np.linalg.svd(lv)
    rho = vh[-1].conj().reshape(d, d)
    rho = rho / np.trace(rho)
    return 0.5 * (rho + dag(rho))


def bloch_superoperator(params: AtomParams) -> np.ndarray:
    """Generator of the Bloch equations acting on ``(p, x, y, z)``."""
    g, w = params.gamma, params.omega
    return np.array(
        [
            [0.0, 0.0, 0.0, 0.0],
            [0.0, -0.5 * g, 0.0, 0.0],
            [0.0, 0.0, -0.5 * g, -w],
            [-g, 0.0, w, -g],
        ]
    )


def stationary_bloch(params: AtomParams) -> BlochVector:
    g, w = params.gamma, params.omega
    if g <= 0:
        raise ValueError("stationary state requires gamma > 0")
    den = g * g + 2 * w * w
    return BlochVector(1.0, 0.0, 2 * w * g / den, -g * g / den)


def stationary_state(params: AtomParams) -> np.ndarray:
    """Closed-form stationary state matrix of the resonant master equation."""
    g, w = params.gamma, params.omega
    num = w * w * IDENTITY + w * g * SIGMA_Y + 0.5 * g * g * (IDENTITY - SIGMA_Z)
    return num / (2 * w * w + g * g)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    k = 0 if abs(v[0]) > 1e-12 else int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def tm_diagonalize(rho) -> DiagonalEnsemble:
    """Diagonal ensemble of a state matrix, heaviest eigenstate first.

    Each eigenstate carries the phase that makes its first nonzero amplitude
    (normally ``<g|phi>``) real and positive.  For a degenerate spectrum the
    returned states are ordered by decreasing ``|<g|phi>|``.
    """
    rho = check_state_matrix(rho)
    w, v = np.linalg.eigh(0.5 * (rho + dag(rho)))
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    degenerate = bool(len(w) > 1 and abs(w[0] - w[1]) < 1e-12)
    states = [_fix_phase(v[:, k]) for k in range(len(w))]
    if degenerate:
        states.sort(key=lambda s: -abs(s[0]))
    weights = tuple(float(max(x, 0.0)) for x in w)
    return DiagonalEnsemble(states=tuple(states), weights=weights, degenerate=degenerate)


def propagate_bloch(v0, params: AtomParams, t: float) -> np.ndarray:
    """``expm(t L) v0`` in the Bloch representation."""
    if t < 0:
        raise ValueError("propagation time must be non-negative")
    gen = bloch_superoperator(params) * t
    norm = np.linalg.norm(gen, 1)
    # split long propagations into chunks that stay well inside the expm guard
    chunks = max(1, int(math.ceil(norm / 500.0)))
    step = expm(gen / chunks).real
    prop = np.linalg.matrix_power(step, chunks)
    return prop @ np.asarray(v0)


def propagate_master(rho0, params: AtomParams, t: float) -> np.ndarray:
    """Solution of the resonant master equation at time ``t``."""
    rho0 = check_state_matrix(rho0, tol=1e-10)
    v0 = BlochVector.from_matrix(rho0).as_array()
    v = propagate_bloch(v0, params, t)
    rho = BlochVector.from_array(v).to_matrix()
    return 0.5 * (rho + dag(rho))


def bloch_of_state(psi) -> np.ndarray:
    """Bloch ``(x, y, z)`` of a normalized (or unnormalized) atomic ket."""
    psi = np.asarray(psi, dtype=complex)
    rho = np.outer(psi, psi.conj()) / np.vdot(psi, psi).real
    b = BlochVector.from_matrix(rho)
    return np.array([b.x, b.y, b.z], dtype=float)


def trace_distance(a, b) -> float:
    d = np.asarray(a) - np.asarray(b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + dag(d))))))
