"""Homodyne jump unravelings of the resonance-fluorescence master equation.

Mixing the fluorescence with a local oscillator of amplitude ``mu`` (in units
where ``gamma |mu|^2`` is the oscillator photon flux) gives the jump operator
``J = sqrt(gamma) (sigma + mu)`` and the no-jump generator

    G = -i Omega sigma_x / 2 - gamma sigma^dag sigma / 2 - gamma mu^* sigma - gamma |mu|^2 / 2.

Two adaptive schemes are provided: the two-state scheme, which inverts
``mu = +-1/2`` after every detection, and orthogonal jumping, where
``mu = -<sigma>`` is slaved to the current state so that every jump lands on
an orthogonal state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.optimize

from .atom import IDENTITY, MINUS, PLUS, SIGMA, SIGMA_X, AtomParams, dag
from .engine import (
    Channel,
    EngineConfig,
    FixedPropagator,
    MeasurementOpSet,
    QuantumTrajectory,
    sample_ensemble,
    sample_trajectory,
    trajectory_rng,
)
from .reference import HOMODYNE

FIXED_POINT_TOL = 1e-10


class MarginalStabilityWarning(UserWarning):
    pass


def build_homodyne_set(atom: AtomParams, mu: complex, name: str = "homodyne") -> MeasurementOpSet:
    mu = complex(mu)
    if not (math.isfinite(mu.real) and math.isfinite(mu.imag)):
        raise ValueError("local-oscillator amplitude must be finite")
    g = atom.gamma
    gen = (
        -0.5j * atom.omega * SIGMA_X
        - 0.5 * g * dag(SIGMA) @ SIGMA
        - g * mu.conjugate() * SIGMA
        - 0.5 * g * abs(mu) ** 2 * IDENTITY
    )
    channels = [Channel(HOMODYNE, math.sqrt(g) * (SIGMA + mu * IDENTITY))] if g > 0 else []
    return MeasurementOpSet(gen, channels, dims=(2,), name=name, info={"mu": mu})


@dataclass(frozen=True)
class FixedPointPair:
    stable: np.ndarray
    unstable: np.ndarray
    stable_eigenvalue: complex
    unstable_eigenvalue: complex
    marginal: bool = False


def _phase_g(v):
    v = v / np.linalg.norm(v)
    k = 0 if abs(v[0]) > 1e-12 else 1
    return v * (abs(v[k]) / v[k])


def fixed_points(atom: AtomParams, mu: complex) -> FixedPointPair:
    """Eigenstates of the no-jump generator, classified by decay rate.

    The stable state is the eigenvector whose eigenvalue has the larger real
    part; it dominates the normalized no-jump flow.
    """
    gen = build_homodyne_set(atom, mu).generator
    w, v = np.linalg.eig(gen)
    order = np.argsort(-w.real, kind="stable")
    w, v = w[order], v[:, order]
    for k in range(2):
        res = np.linalg.norm(gen @ v[:, k] - w[k] * v[:, k])
        if res > FIXED_POINT_TOL * max(1.0, np.abs(gen).max()):
            raise ArithmeticError(f"fixed-point residual {res:.2e}")
    marginal = abs(w[0].real - w[1].real) <= 1e-12 * max(1.0, atom.rate_scale)
    return FixedPointPair(_phase_g(v[:, 0]), _phase_g(v[:, 1]), complex(w[0]), complex(w[1]), bool(marginal))


def stable_root(atom: AtomParams, mu: complex) -> complex:
    """Square root ``r`` of ``W^2 - 2i W g mu^* - g^2/4`` giving the stable eigenvalue.

    The eigenvalues are ``-g(1 + 2|mu|^2)/4 -+ i r/2``; the stable one takes
    the root with positive imaginary part.
    """
    g, w = atom.gamma, atom.omega
    r = np.sqrt(complex(w * w - 2j * w * g * complex(mu).conjugate() - g * g / 4))
    return r if r.imag >= 0 else -r


def two_state_states(atom: AtomParams) -> dict:
    """Closed-form stable/unstable states and eigenvalues for ``mu = +-1/2``."""
    g, w = atom.gamma, atom.omega
    nrm = math.sqrt(2 * w * w + g * g)
    out = {}
    for s in (+1, -1):
        out[s] = {
            "stable": np.array([(s * w - 1j * g) / nrm, -w / nrm]),
            "unstable": np.array([1, s]) / math.sqrt(2),
            "lambda_s": -g / 8 + s * 0.5j * w,
            "lambda_u": -5 * g / 8 - s * 0.5j * w,
        }
    return out


def _consistency(atom: AtomParams, mu: complex) -> complex:
    """Zero when ``(sigma + mu)`` maps the stable state for ``mu`` onto the stable state for ``-mu``."""
    u = (SIGMA + mu * IDENTITY) @ fixed_points(atom, mu).stable
    v = fixed_points(atom, -mu).stable
    u = u / np.linalg.norm(u)
    return complex(u[0] * v[1] - u[1] * v[0])


def solve_two_state_mu(atom: AtomParams, n_starts: int = 5) -> tuple:
    """``(mu_+, mu_-)`` for the two-state adaptive scheme, found numerically.

    Multistart 2-d root search over ``Re mu in [0.05, 2]``, ``Im mu in [-1, 1]``;
    all distinct roots in the box are collected and must be unique.
    """
    if not atom.omega > 0:
        raise ValueError("two-state scheme needs Omega > 0")

    def f(x):
        c = _consistency(atom, complex(x[0], x[1]))
        return [c.real, c.imag]

    roots = []
    for re0 in np.linspace(0.05, 2.0, n_starts):
        for im0 in np.linspace(-1.0, 1.0, n_starts):
            sol = scipy.optimize.root(f, [re0, im0], method="hybr", options={"xtol": 1e-14})
            if not sol.success:
                continue
            mu = complex(sol.x[0], sol.x[1])
            if not (0.05 <= mu.real <= 2.0 and -1.0 <= mu.imag <= 1.0):
                continue
            if abs(_consistency(atom, mu)) > 1e-12:
                continue
            if all(abs(mu - r) > 1e-8 for r in roots):
                roots.append(mu)
    if not roots:
        raise ArithmeticError("no two-state solution found")
    if len(roots) > 1:
        raise ArithmeticError(f"two-state solution is not unique in the search box: {roots}")
    mu = roots[0]
    # polish: purely real to machine precision when the imaginary part is noise
    if abs(mu.imag) < 1e-13:
        mu = complex(mu.real, 0.0)
    return mu, -mu


def two_state_sets(atom: AtomParams, mu: complex = 0.5) -> tuple:
    """The pair of homodyne sets for ``+mu`` and ``-mu`` that switch into each other."""
    plus = build_homodyne_set(atom, mu, name="two-state+")
    minus = build_homodyne_set(atom, -mu, name="two-state-")
    plus.switch = lambda label: minus
    minus.switch = lambda label: plus
    return plus, minus


def two_state_error_analytic(atom: AtomParams) -> float:
    """``|<+|psi_s^+>|^2 = g^2 / (4 W^2 + 2 g^2)``."""
    g, w = atom.gamma, atom.omega
    return g * g / (4 * w * w + 2 * g * g)


def dressed_error(states) -> np.ndarray:
    """Probability of not being in the nearest dressed state, per ket."""
    s = np.atleast_2d(states)
    s = s / np.linalg.norm(s, axis=1)[:, None]
    pp = np.abs(s @ PLUS.conj()) ** 2
    pm = np.abs(s @ MINUS.conj()) ** 2
    return np.minimum(pp, pm)


def _relabel(traj: QuantumTrajectory, scheme: str, mu0: complex) -> QuantumTrajectory:
    mus = [mu0 * (-1) ** k for k in range(len(traj.event_times) + 1)]
    traj.scheme = scheme
    traj.meta = {"mu_history": mus}
    return traj


def simulate_two_state(
    atom: AtomParams,
    duration: float,
    seed,
    initial=None,
    config: Optional[EngineConfig] = None,
    rng=None,
) -> QuantumTrajectory:
    """Adaptive two-state trajectory, started by default in ``psi_s^+``."""
    plus, _ = two_state_sets(atom)
    if initial is None:
        initial = fixed_points(atom, 0.5).stable
    tr = sample_trajectory(initial, plus, duration, seed, config, rng=rng)
    return _relabel(tr, "two-state", 0.5)


def simulate_two_state_ensemble(atom, duration, n_traj, master_seed, initial=None, config=None) -> list:
    plus, _ = two_state_sets(atom)
    if initial is None:
        initial = fixed_points(atom, 0.5).stable
    trs = sample_ensemble(initial, plus, duration, n_traj, master_seed, config)
    return [_relabel(t, "two-state", 0.5) for t in trs]


def two_state_stability(atom: AtomParams, p: complex, q: complex) -> float:
    """Expected squared overlap with the new unstable state after the first jump.

    The atom starts in ``p psi_s^+ + q psi_u^+`` (normalized) with ``mu = +1/2``;
    the expectation integrates ``|<psi_u^-| J exp(G t) psi_0>|^2`` over the
    jump time exactly, using the eigen-decomposition of ``G``.
    """
    if abs(abs(p) ** 2 + abs(q) ** 2 - 1) > 1e-9:
        raise ValueError("weights must satisfy |p|^2 + |q|^2 = 1")
    st = two_state_states(atom)
    psi0 = p * st[+1]["stable"] + q * st[+1]["unstable"]
    psi0 = psi0 / np.linalg.norm(psi0)
    opset = build_homodyne_set(atom, 0.5)
    jump = opset.channels[0].op
    target = st[-1]["unstable"]
    w, v = np.linalg.eig(opset.generator)
    c = np.linalg.solve(v, psi0)
    amp = (target.conj() @ jump @ v) * c
    # integral of |sum_k amp_k exp(w_k t)|^2 over t in [0, inf)
    mat = -1.0 / (w[:, None] + w.conj()[None, :])
    return float(np.real(amp @ mat @ amp.conj()))


def two_state_stability_mc(atom: AtomParams, p: complex, q: complex, n: int, seed) -> tuple:
    """Monte Carlo estimate of :func:`two_state_stability` with its standard error."""
    st = two_state_states(atom)
    psi0 = p * st[+1]["stable"] + q * st[+1]["unstable"]
    psi0 = psi0 / np.linalg.norm(psi0)
    opset = build_homodyne_set(atom, 0.5)
    prop = FixedPropagator(opset.generator)
    jump = opset.channels[0].op
    target = st[-1]["unstable"]
    c = prop.coeffs(psi0)
    # the no-jump norm decays to zero, so a finite horizon always suffices
    horizon = 200.0 / atom.gamma
    vals = np.empty(n)
    for k in range(n):
        rng = trajectory_rng(seed, k)
        tau = prop.jump_time(c, math.log(rng.random()), horizon, 1e-12)
        post = jump @ prop.state(c, tau)
        post /= np.linalg.norm(post)
        vals[k] = abs(np.vdot(target, post)) ** 2
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0


# ---------------------------------------------------------------- orthogonal jumps


def _expect_sigma(psi: np.ndarray) -> np.ndarray:
    nrm = np.sum(np.abs(psi) ** 2, axis=1)
    return np.conj(psi[:, 0]) * psi[:, 1] / nrm


def build_orthogonal_set(atom: AtomParams) -> MeasurementOpSet:
    """State-dependent set with ``mu = -<sigma>``.

    Jump: ``sqrt(g) (sigma - <sigma>)``.  No-jump generator:
    ``-i W sigma_x/2 - g sigma^dag sigma/2 + g <sigma>^* sigma - g |<sigma>|^2/2``,
    the sign fixed by completeness.
    """
    g = atom.gamma
    base = -0.5j * atom.omega * SIGMA_X - 0.5 * g * dag(SIGMA) @ SIGMA

    def generator_rule(psi):
        s = _expect_sigma(psi)
        out = np.empty((len(psi), 2, 2), dtype=complex)
        out[:] = base
        out += g * np.conj(s)[:, None, None] * SIGMA
        out -= (0.5 * g * np.abs(s) ** 2)[:, None, None] * IDENTITY
        return out

    def jump_rule(psi):
        s = _expect_sigma(psi)
        return math.sqrt(g) * (SIGMA[None] - s[:, None, None] * IDENTITY[None])

    channels = [Channel(HOMODYNE, rule=jump_rule)] if g > 0 else []
    return MeasurementOpSet(None, channels, dims=(2,), name="orthogonal", generator_rule=generator_rule)


def orthogonal_fixed_points(atom: AtomParams) -> tuple:
    """``(theta_+, theta_-)`` with ``<e|theta>/<g|theta> = (+-sqrt(W^2 - g^2) - i g)/W``."""
    g, w = atom.gamma, atom.omega
    if not w > g:
        raise ValueError("orthogonal-jump fixed points need Omega > gamma")
    root = math.sqrt(w * w - g * g)
    out = []
    for s in (+1, -1):
        v = np.array([w, s * root - 1j * g]) / (math.sqrt(2) * w)
        out.append(v)
    return tuple(out)


def orthogonal_linearized_eigenvalues(atom: AtomParams) -> np.ndarray:
    """``-g/4 +- sqrt(g^2/16 + g^2 - W^2)``."""
    g, w = atom.gamma, atom.omega
    r = np.sqrt(complex(g * g / 16 + g * g - w * w))
    return np.array([-g / 4 + r, -g / 4 - r])


def projective_velocity(atom: AtomParams, z: complex) -> complex:
    """``dz/dt`` of ``z = <e|psi>/<g|psi>`` under the normalized no-jump flow."""
    psi = np.array([[1.0, z]], dtype=complex)
    gen = build_orthogonal_set(atom).generator_batch(psi)[0]
    d = gen @ psi[0]
    return complex(d[1] - z * d[0])


def numerical_jacobian_eigenvalues(atom: AtomParams, state, step: float = 1e-6) -> np.ndarray:
    """Eigenvalues of the no-jump flow linearized at ``state`` (central differences)."""
    z0 = complex(state[1] / state[0])
    jac = np.empty((2, 2))
    for k, dz in enumerate((step, 1j * step)):
        dv = (projective_velocity(atom, z0 + dz) - projective_velocity(atom, z0 - dz)) / (2 * step)
        jac[:, k] = [dv.real, dv.imag]
    return np.linalg.eigvals(jac)


def simulate_orthogonal(
    atom: AtomParams,
    duration: float,
    seed,
    initial=PLUS,
    config: Optional[EngineConfig] = None,
) -> QuantumTrajectory:
    """Orthogonal-jump trajectory with RK4 substeps no longer than ``config.dt_max``.

    States with ``<sigma_x> = 0`` form an invariant circle of this scheme (both
    flow and jumps preserve it), so the default start is ``|+>``.
    """
    config = (config or EngineConfig()).resolved(atom.rate_scale)
    return sample_trajectory(initial, build_orthogonal_set(atom), duration, seed, config)


@dataclass(frozen=True)
class ErrorEstimate:
    mean: float
    stderr: float
    n_trajectories: int
    n_snapshots: int


def ensemble_dressed_error(trajs, burn_in: float = 0.0) -> ErrorEstimate:
    """Mean nearest-dressed-state error over snapshots after ``burn_in``.

    The standard error is taken over per-trajectory means.
    """
    means, count = [], 0
    for tr in trajs:
        keep = tr.snapshot_times >= burn_in
        e = dressed_error(tr.snapshots[keep])
        means.append(e.mean())
        count += e.size
    means = np.array(means)
    se = means.std(ddof=1) / math.sqrt(len(means)) if len(means) > 1 else float("nan")
    return ErrorEstimate(float(means.mean()), float(se), len(means), count)


def orthogonal_error(atom, n_traj, duration, burn_in, master_seed, dt_max=None, snapshot_interval=0.05) -> ErrorEstimate:
    """Steady-state dressed-state error of orthogonal jumping."""
    cfg = EngineConfig(
        dt_max=dt_max, snapshot_interval=snapshot_interval / atom.gamma, store_event_states=False
    ).resolved(atom.rate_scale)
    trs = sample_ensemble(PLUS, build_orthogonal_set(atom), duration, n_traj, master_seed, cfg)
    return ensemble_dressed_error(trs, burn_in)
