"""Classical jump-process baselines: the Teich-Mahler eigenstate model and the
dressed-state model.

Both are stationary two-state continuous-time Markov chains whose transitions
are labelled by the Mollow peak the emitted photon is assigned to.  Sampling
uses exponential waiting times, which is exact for constant rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .atom import AtomParams, lindblad_ops, stationary_state, tm_diagonalize

CENTRAL = "central"
UPPER = "upper-sideband"
LOWER = "lower-sideband"
REJECTED = "1"
PASSED_A = "a"
PASSED_B = "b"
HOMODYNE = "homodyne"

CHANNEL_LABELS = (CENTRAL, UPPER, LOWER, REJECTED, PASSED_A, PASSED_B, HOMODYNE)


@dataclass(frozen=True)
class JumpRateMatrix:
    """``rates[target, source]``: probability per unit time of ``source -> target``."""

    rates: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.rates) < 0):
            raise ValueError("jump rates must be non-negative")

    def __getitem__(self, key):
        return self.rates[key]

    def exit_rate(self, source: int) -> float:
        return float(self.rates[:, source].sum())


@dataclass
class ClassicalTrajectory:
    times: np.ndarray
    labels: list
    states: np.ndarray
    initial_state: int
    seed: int
    duration: float
    n_states: int = 2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("event times must be strictly increasing")
        if len(self.states) and (self.states.min() < 0 or self.states.max() >= self.n_states):
            raise ValueError("state index out of range")

    def __len__(self):
        return len(self.times)

    def occupation_times(self) -> np.ndarray:
        """Total time spent in each state over ``[0, duration]``."""
        occ = np.zeros(self.n_states)
        t_prev, s = 0.0, self.initial_state
        for t, s_new in zip(self.times, self.states):
            occ[s] += t - t_prev
            t_prev, s = t, s_new
        occ[s] += self.duration - t_prev
        return occ

    def source_states(self) -> np.ndarray:
        return np.concatenate([[self.initial_state], self.states[:-1]]).astype(int)

    def conditional_rates(self) -> dict:
        """Events per channel divided by time spent in the channel's source states."""
        occ = self.occupation_times()
        src = self.source_states()
        out = {}
        for lab in sorted(set(self.labels)):
            mask = np.array([l == lab for l in self.labels])
            sources = np.unique(src[mask])
            out[lab] = mask.sum() / occ[sources].sum()
        return out

    def transition_rates(self) -> dict:
        """Estimated ``R[target, source]`` from counts and occupation times."""
        occ = self.occupation_times()
        src = self.source_states()
        out = {}
        for a, b in zip(self.states, src):
            out[(int(a), int(b))] = out.get((int(a), int(b)), 0) + 1
        return {k: v / occ[k[1]] for k, v in out.items()}


def tm_rates(ensemble, c_ops) -> JumpRateMatrix:
    """``R[mu, nu] = sum_j |<phi_mu| c_j |phi_nu>|^2``."""
    phi = np.column_stack(ensemble.states)
    rates = np.zeros((phi.shape[1], phi.shape[1]))
    for c in c_ops:
        rates += np.abs(phi.conj().T @ np.asarray(c) @ phi) ** 2
    return JumpRateMatrix(rates)


def tm_rates_shifted(ensemble, c_ops, shifts) -> JumpRateMatrix:
    """TM rates after the split-changing shift ``c_j -> c_j + lambda_j``."""
    if len(shifts) != len(c_ops):
        raise ValueError("need one shift per Lindblad operator")
    shifted = [np.asarray(c) + s * np.eye(np.asarray(c).shape[0]) for c, s in zip(c_ops, shifts)]
    return tm_rates(ensemble, shifted)


def traceless_shifts(c_ops) -> list:
    return [-np.trace(np.asarray(c)) / np.asarray(c).shape[0] for c in c_ops]


def _simulate_chain(transitions, initial, duration, seed, n_states=2) -> ClassicalTrajectory:
    """Sample a labelled chain.

    ``transitions[source]`` is a list of ``(rate, target, label)`` triples.
    """
    rng = np.random.default_rng(seed)
    times, labels, states = [], [], []
    t, s = 0.0, initial
    while True:
        options = [o for o in transitions[s] if o[0] > 0]
        total = sum(o[0] for o in options)
        if total <= 0:
            break
        t += rng.exponential(1.0 / total)
        if t >= duration:
            break
        u = rng.random() * total
        acc = 0.0
        for rate, target, label in options:
            acc += rate
            if u < acc:
                break
        times.append(t)
        labels.append(label)
        states.append(target)
        s = target
    return ClassicalTrajectory(
        times=np.array(times),
        labels=labels,
        states=np.array(states, dtype=int),
        initial_state=initial,
        seed=seed,
        duration=duration,
        n_states=n_states,
    )


def tm_ensemble(params: AtomParams):
    return tm_diagonalize(stationary_state(params))


def simulate_tm(params: AtomParams, duration: float, seed: int, initial: int = 0) -> ClassicalTrajectory:
    """Stationary Teich-Mahler trajectory over the exact diagonal ensemble.

    Self-jumps are central-peak emissions; a flip from the heavier eigenstate
    (index 0) is labelled upper-sideband and the reverse flip lower-sideband.
    """
    if params.gamma == 0 or duration <= 0:
        return _simulate_chain({0: [], 1: []}, initial, max(duration, 0.0), seed)
    ens = tm_ensemble(params)
    r = tm_rates(ens, lindblad_ops(params)).rates
    transitions = {
        0: [(r[0, 0], 0, CENTRAL), (r[1, 0], 1, UPPER)],
        1: [(r[1, 1], 1, CENTRAL), (r[0, 1], 0, LOWER)],
    }
    traj = _simulate_chain(transitions, initial, duration, seed)
    traj.meta.update(model="tm", weights=ens.weights, rates=r.tolist())
    return traj


def dressed_rates(params: AtomParams) -> JumpRateMatrix:
    """Dressed-state rates; index 0 is ``|+>``, index 1 is ``|->``."""
    q = params.gamma / 4
    return JumpRateMatrix(np.full((2, 2), q))


def simulate_dressed(params: AtomParams, duration: float, seed: int, initial: int = 0) -> ClassicalTrajectory:
    """Dressed-state chain over ``|+>`` (0) and ``|->`` (1), every rate gamma/4."""
    q = params.gamma / 4
    transitions = {
        0: [(q, 0, CENTRAL), (q, 1, UPPER)],
        1: [(q, 1, CENTRAL), (q, 0, LOWER)],
    }
    traj = _simulate_chain(transitions, initial, max(duration, 0.0), seed)
    traj.meta.update(model="dressed")
    return traj
