"""Pure-state quantum-trajectory simulation for jump unravelings.

A :class:`MeasurementOpSet` holds the no-jump generator ``G`` (so that
``Omega_0(dt) = 1 + G dt``) and the jump operators ``J_c`` (so that
``Omega_c(dt) = sqrt(dt) J_c``).  Completeness to first order in ``dt`` is
``G + G^dag + sum_c J_c^dag J_c = 0``.

Jump times are drawn with the waiting-time algorithm: a uniform threshold
``u`` is drawn and the unnormalized no-jump state is propagated until its
squared norm falls to ``u``.  For a fixed generator the propagation is exact
(eigen-decomposition of ``G``, falling back to ``expm`` when ``G`` is close to
defective).  State-dependent generators are integrated with classical RK4 on
substeps no longer than ``dt_max``, batched over trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import linalg
from .atom import SIGMA, SIGMA_X, AtomParams, dag

COMPLETENESS_TOL = 1e-10
NORM_FLOOR = 1e-30


class TruncationError(RuntimeError):
    """The top Fock level of a filter cavity became too populated."""


class NormUnderflowError(ArithmeticError):
    pass


@dataclass
class Channel:
    """A detection channel: a fixed jump matrix ``op`` or a batched ``rule``.

    ``rule(psi)`` receives states of shape ``(n, d)`` and returns jump
    matrices of shape ``(n, d, d)``.
    """

    label: str
    op: Optional[np.ndarray] = None
    rule: Optional[Callable] = None

    def matrices(self, psi: np.ndarray) -> np.ndarray:
        if self.rule is not None:
            return self.rule(psi)
        return np.broadcast_to(self.op, (psi.shape[0],) + self.op.shape)


@dataclass(eq=False)
class MeasurementOpSet:
    """No-jump generator plus labelled jump channels.

    ``switch``, when given, maps the label of a detection to the set in force
    after it; this is how adaptive schemes change their local oscillator.
    """

    generator: Optional[np.ndarray]
    channels: list
    dims: tuple = (2,)
    name: str = ""
    generator_rule: Optional[Callable] = None
    switch: Optional[Callable] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.generator is None) == (self.generator_rule is None):
            raise ValueError("give exactly one of generator / generator_rule")
        if self.generator is not None:
            self.generator = np.asarray(self.generator, dtype=complex)
            if self.state_dependent:
                raise ValueError("fixed generator cannot have rule-based channels")
            for ch in self.channels:
                ch.op = np.asarray(ch.op, dtype=complex)
            res = self.completeness_residual()
            scale = max(1.0, np.abs(self.generator).max())
            if res > COMPLETENESS_TOL * scale:
                raise ValueError(f"{self.name or 'measurement set'} violates completeness ({res:.2e})")

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def state_dependent(self) -> bool:
        return self.generator_rule is not None or any(ch.rule is not None for ch in self.channels)

    @property
    def labels(self) -> list:
        return [ch.label for ch in self.channels]

    def generator_batch(self, psi: np.ndarray) -> np.ndarray:
        if self.generator_rule is not None:
            return self.generator_rule(psi)
        return np.broadcast_to(self.generator, (psi.shape[0],) + self.generator.shape)

    def generator_at(self, psi=None) -> np.ndarray:
        if self.generator is not None:
            return self.generator
        return self.generator_batch(np.asarray(psi, dtype=complex)[None])[0]

    def jump_ops_at(self, psi=None) -> list:
        if psi is None:
            return [(ch.label, ch.op) for ch in self.channels]
        p = np.asarray(psi, dtype=complex)[None]
        return [(ch.label, ch.matrices(p)[0]) for ch in self.channels]

    def completeness_residual(self, psi=None) -> float:
        g = self.generator_at(psi)
        total = g + dag(g)
        for _, j in self.jump_ops_at(None if not self.state_dependent else psi):
            total = total + dag(j) @ j
        return float(np.abs(total).max())


@dataclass
class EngineConfig:
    """Numerical knobs of the trajectory engine.

    ``dt_max`` bounds RK4 substeps for state-dependent generators (default
    ``1e-3 / max(Omega, gamma)``, resolved by :meth:`resolved`).
    ``jump_tolerance`` is the tolerance on ``log`` survival probability when
    locating a jump.  ``snapshot_interval`` of ``None`` disables snapshots.
    """

    dt_max: Optional[float] = None
    jump_tolerance: float = 1e-10
    snapshot_interval: Optional[float] = None
    fock_guard: float = 1e-4
    store_event_states: bool = True
    store_pre_jump_states: bool = False
    max_events: Optional[int] = None

    def __post_init__(self):
        for name in ("dt_max", "snapshot_interval"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if not (self.jump_tolerance > 0 and self.fock_guard > 0):
            raise ValueError("tolerances must be positive")

    def resolved(self, rate_scale: float) -> "EngineConfig":
        if self.dt_max is not None:
            return self
        return replace(self, dt_max=1e-3 / max(rate_scale, 1e-12))


@dataclass
class QuantumTrajectory:
    event_times: np.ndarray
    event_labels: list
    event_states: Optional[np.ndarray]
    snapshot_times: np.ndarray
    snapshots: np.ndarray
    final_state: np.ndarray
    seed: object
    scheme: str
    duration: float
    dims: tuple
    meta: dict = field(default_factory=dict)
    pre_jump_states: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.event_times)

    def label_counts(self) -> dict:
        out = {}
        for lab in self.event_labels:
            out[lab] = out.get(lab, 0) + 1
        return out

    def atom_snapshots(self) -> np.ndarray:
        """Reduced atomic state matrices at the snapshot times, shape ``(n, 2, 2)``."""
        return reduced_atom(self.snapshots, self.dims)


def reduced_atom(states: np.ndarray, dims) -> np.ndarray:
    """Atomic reduced density matrices of joint kets (atom is the first factor)."""
    s = np.asarray(states).reshape(len(states), dims[0], -1)
    return np.einsum("nak,nbk->nab", s, s.conj())


def trajectory_rng(master_seed, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` of an ensemble."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(int(index),)))


def _top_fock_mask(dims) -> Optional[np.ndarray]:
    if len(dims) < 2:
        return None
    grids = np.indices(dims).reshape(len(dims), -1)
    mask = np.zeros(grids.shape[1], dtype=bool)
    for k in range(1, len(dims)):
        mask |= grids[k] == dims[k] - 1
    return mask


def _check_guard(states, mask, guard, where):
    if mask is None:
        return
    s = np.atleast_2d(states)
    pop = np.sum(np.abs(s[:, mask]) ** 2, axis=1) / np.sum(np.abs(s) ** 2, axis=1)
    if pop.max() > guard:
        raise TruncationError(
            f"top Fock level population {pop.max():.3e} exceeds guard {guard:.1e} ({where}); "
            "increase n_max"
        )


class FixedPropagator:
    """Exact no-jump propagation ``exp(G t) psi`` for a fixed generator."""

    def __init__(self, generator: np.ndarray):
        self.g = np.asarray(generator, dtype=complex)
        w, v = np.linalg.eig(self.g)
        cond = np.linalg.cond(v)
        self.use_eig = bool(np.isfinite(cond) and cond < 1e8)
        if self.use_eig:
            self.w = w
            self.v = v
            self.vinv = np.linalg.inv(v)
            self.gram = dag(v) @ v

    def coeffs(self, psi):
        return self.vinv @ psi if self.use_eig else np.asarray(psi, dtype=complex)

    def state(self, c, t):
        if self.use_eig:
            return self.v @ (c * np.exp(self.w * t))
        return linalg.expm(self.g * t) @ c

    def states(self, c, times):
        """States at several times, shape ``(len(times), d)``."""
        times = np.asarray(times, dtype=float)
        if self.use_eig:
            return (np.exp(np.outer(times, self.w)) * c) @ self.v.T
        return np.array([self.state(c, t) for t in times])

    def norm2(self, c, t) -> float:
        if self.use_eig:
            a = c * np.exp(self.w * t)
            return float(np.real(np.conj(a) @ self.gram @ a))
        s = self.state(c, t)
        return float(np.real(np.vdot(s, s)))

    def log_norm2_and_slope(self, c, t):
        if self.use_eig:
            a = c * np.exp(self.w * t)
            ga = self.gram @ a
            n = float(np.real(np.conj(a) @ ga))
            dn = float(2 * np.real(np.conj(self.w * a) @ ga))
        else:
            s = self.state(c, t)
            n = float(np.real(np.vdot(s, s)))
            dn = float(2 * np.real(np.vdot(s, self.g @ s)))
        n = max(n, 1e-300)
        return math.log(n), dn / n

    def jump_time(self, c, log_u, t_hi, tol) -> float:
        """Solve ``log N(t) = log_u`` on ``(0, t_hi]`` by safeguarded Newton."""
        lo, hi = 0.0, t_hi
        t = 0.0
        for _ in range(200):
            f, df = self.log_norm2_and_slope(c, t)
            f -= log_u
            if abs(f) <= tol:
                return t
            if f > 0:
                lo = t
            else:
                hi = t
            if hi - lo <= 1e-15 * max(1.0, hi):
                return hi
            step_ok = df < 0
            t_new = t - f / df if step_ok else 0.5 * (lo + hi)
            if not (lo < t_new < hi):
                t_new = 0.5 * (lo + hi)
            t = t_new
        return t


def evolve_no_jump(state, opset: MeasurementOpSet, t: float, config: Optional[EngineConfig] = None):
    """Propagate without detections; returns ``(unnormalized state, survival)``."""
    psi = np.asarray(state, dtype=complex)
    if abs(np.vdot(psi, psi).real - 1) > 1e-9:
        raise ValueError("input state must be normalized")
    if t < 0:
        raise ValueError("t must be non-negative")
    if not opset.state_dependent:
        out = FixedPropagator(opset.generator).state(FixedPropagator(opset.generator).coeffs(psi), t)
    else:
        cfg = config or EngineConfig(dt_max=1e-3)
        if cfg.dt_max is None:
            raise ValueError("state-dependent evolution needs dt_max")
        n = max(1, int(math.ceil(t / cfg.dt_max)))
        h = t / n
        p = psi[None]
        for _ in range(n):
            p = _rk4(opset, p, h)
        out = p[0]
    surv = float(np.vdot(out, out).real)
    if surv < NORM_FLOOR:
        raise NormUnderflowError(f"no-jump survival {surv:.2e} underflowed")
    return out, surv


def _rk4(opset, p, h):
    def f(x):
        return np.einsum("nij,nj->ni", opset.generator_batch(x), x)

    k1 = f(p)
    k2 = f(p + 0.5 * h * k1)
    k3 = f(p + 0.5 * h * k2)
    k4 = f(p + h * k3)
    return p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _choose_channel(opset, psi, rng):
    ops = opset.jump_ops_at(psi if opset.state_dependent else None)
    jumped = [j @ psi for _, j in ops]
    weights = np.array([np.vdot(v, v).real for v in jumped])
    total = weights.sum()
    if total <= 0:
        raise ArithmeticError("jump occurred with zero total detection rate")
    probs = weights / total
    k = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    k = min(k, len(ops) - 1)
    new = jumped[k] / math.sqrt(weights[k])
    return ops[k][0], new, probs


def _snapshot_grid(duration, interval):
    if interval is None:
        return np.zeros(0)
    n = int(math.floor(duration / interval + 1e-9))
    return np.arange(n + 1) * interval


def sample_trajectory(
    initial,
    opset: MeasurementOpSet,
    duration: float,
    seed,
    config: Optional[EngineConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> QuantumTrajectory:
    """One quantum trajectory by the waiting-time algorithm."""
    config = config or EngineConfig()
    if opset.state_dependent:
        rng = rng if rng is not None else np.random.default_rng(seed)
        return sample_ensemble_state_dependent(
            np.asarray(initial, dtype=complex)[None], opset, duration, [rng], config, seeds=[seed]
        )[0]
    rng = rng if rng is not None else np.random.default_rng(seed)
    return _sample_fixed(initial, opset, duration, seed, config, rng)


def _sample_fixed(initial, opset, duration, seed, config, rng, cache=None):
    psi = np.asarray(initial, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    mask = _top_fock_mask(opset.dims)
    cache = {} if cache is None else cache
    grid = _snapshot_grid(duration, config.snapshot_interval)
    snap_states = np.empty((len(grid), psi.size), dtype=complex)
    gi = 0
    ev_t, ev_l, ev_s, ev_pre = [], [], [], []
    history = [opset.name]
    t = 0.0
    current = opset
    while True:
        prop = cache.get(id(current))
        if prop is None:
            prop = cache[id(current)] = FixedPropagator(current.generator)
        c = prop.coeffs(psi)
        remaining = duration - t
        log_u = math.log(rng.random())
        jumps = len(current.channels) > 0 and remaining > 0 and math.log(
            max(prop.norm2(c, remaining), 1e-300)) < log_u
        tau = prop.jump_time(c, log_u, remaining, config.jump_tolerance) if jumps else remaining
        # snapshots strictly before the jump (up to and including the end if no jump)
        end = t + tau
        gj = gi
        while gj < len(grid) and (grid[gj] < end or (not jumps and grid[gj] <= end + 1e-12)):
            gj += 1
        if gj > gi:
            seg = prop.states(c, grid[gi:gj] - t)
            seg /= np.linalg.norm(seg, axis=1)[:, None]
            snap_states[gi:gj] = seg
            _check_guard(seg, mask, config.fock_guard, f"t={grid[gj - 1]:.4g}")
            gi = gj
        if not jumps:
            psi = prop.state(c, remaining)
            psi = psi / np.linalg.norm(psi)
            break
        pre = prop.state(c, tau)
        pre = pre / np.linalg.norm(pre)
        t = end
        label, psi, _ = _choose_channel(current, pre, rng)
        _check_guard(psi, mask, config.fock_guard, f"after {label} jump at t={t:.4g}")
        ev_t.append(t)
        ev_l.append(label)
        if config.store_event_states:
            ev_s.append(psi)
        if config.store_pre_jump_states:
            ev_pre.append(pre)
        if current.switch is not None:
            current = current.switch(label)
            history.append(current.name)
        if config.max_events is not None and len(ev_t) >= config.max_events:
            # truncate the run at this event
            snap_states = snap_states[:gi]
            grid = grid[:gi]
            duration = t
            break
    return QuantumTrajectory(
        event_times=np.array(ev_t),
        event_labels=ev_l,
        event_states=np.array(ev_s) if config.store_event_states else None,
        snapshot_times=grid,
        snapshots=snap_states,
        final_state=psi,
        seed=seed,
        scheme=opset.name,
        duration=duration,
        dims=tuple(opset.dims),
        meta={"set_history": history} if opset.switch is not None else {},
        pre_jump_states=np.array(ev_pre) if config.store_pre_jump_states else None,
    )


def sample_ensemble_state_dependent(initials, opset, duration, rngs, config, seeds=None):
    """Batched RK4 waiting-time simulation for a state-dependent measurement set.

    ``initials`` has shape ``(n, d)``; ``rngs`` holds one generator per
    trajectory, drawn from only at jumps so results do not depend on batching.
    """
    if config.dt_max is None:
        raise ValueError("state-dependent sampling needs config.dt_max (use EngineConfig.resolved)")
    psi = np.array(initials, dtype=complex)
    psi /= np.linalg.norm(psi, axis=1)[:, None]
    n, d = psi.shape
    grid = _snapshot_grid(duration, config.snapshot_interval)
    # step size dividing the snapshot interval exactly
    base = config.snapshot_interval if config.snapshot_interval is not None else duration
    sub = max(1, int(math.ceil(base / config.dt_max - 1e-9)))
    h = base / sub
    nsteps = int(math.floor(duration / h + 1e-9))
    tail = duration - nsteps * h
    snaps = np.empty((len(grid), n, d), dtype=complex)
    log_u = np.array([math.log(r.random()) for r in rngs])
    events = [([], [], [], []) for _ in range(n)]
    gi = 0
    if len(grid) and grid[0] == 0.0:
        snaps[0] = psi
        gi = 1
    t = 0.0
    steps = [h] * nsteps + ([tail] if tail > 1e-12 * h else [])
    for k, hk in enumerate(steps):
        new = _rk4(opset, psi, hk)
        n2 = np.sum(np.abs(new) ** 2, axis=1)
        crossed = np.nonzero(np.log(np.maximum(n2, 1e-300)) < log_u)[0]
        for i in crossed:
            new[i], log_u[i] = _resolve_step(opset, psi[i], hk, t, log_u[i], rngs[i], events[i], config)
        psi = new
        t = (k + 1) * h if k < nsteps else duration
        # renormalize occasionally to keep magnitudes sane; thresholds are in log space
        nn = np.sum(np.abs(psi) ** 2, axis=1)
        small = nn < 1e-100
        if np.any(small):
            log_u[small] -= np.log(nn[small])
            psi[small] /= np.sqrt(nn[small])[:, None]
        while gi < len(grid) and abs(grid[gi] - t) <= 1e-9 * max(1.0, t):
            snaps[gi] = psi / np.sqrt(nn)[:, None]
            gi += 1
    final = psi / np.linalg.norm(psi, axis=1)[:, None]
    seeds = seeds if seeds is not None else [None] * n
    out = []
    for i in range(n):
        et, el, es, ep = events[i]
        out.append(
            QuantumTrajectory(
                event_times=np.array(et),
                event_labels=el,
                event_states=np.array(es) if config.store_event_states else None,
                snapshot_times=grid[:gi],
                snapshots=snaps[:gi, i, :].copy(),
                final_state=final[i],
                seed=seeds[i],
                scheme=opset.name,
                duration=duration,
                dims=tuple(opset.dims),
                pre_jump_states=np.array(ep) if config.store_pre_jump_states else None,
            )
        )
    return out


def _resolve_step(opset, p0, h, t0, log_u, rng, events, config):
    """Propagate one trajectory across a step in which its threshold is crossed."""
    p = p0.copy()
    base_log = math.log(np.vdot(p, p).real)
    remaining = h
    t = t0
    while True:
        trial = _rk4(opset, p[None], remaining)[0]
        if math.log(max(np.vdot(trial, trial).real, 1e-300)) >= log_u:
            return trial, log_u
        lo, hi = 0.0, remaining
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            pm = _rk4(opset, p[None], mid)[0]
            f = math.log(max(np.vdot(pm, pm).real, 1e-300)) - log_u
            if abs(f) <= config.jump_tolerance:
                lo = hi = mid
                break
            if f > 0:
                lo = mid
            else:
                hi = mid
        tau = hi
        pre = _rk4(opset, p[None], tau)[0]
        pre /= np.linalg.norm(pre)
        label, post, _ = _choose_channel(opset, pre, rng)
        t += tau
        events[0].append(t)
        events[1].append(label)
        if config.store_event_states:
            events[2].append(post)
        if config.store_pre_jump_states:
            events[3].append(pre)
        p = post
        remaining -= tau
        log_u = math.log(rng.random())
        if remaining <= 0:
            return p, log_u


def sample_ensemble(
    initial,
    opset: MeasurementOpSet,
    duration: float,
    n_traj: int,
    master_seed,
    config: Optional[EngineConfig] = None,
) -> list:
    """``n_traj`` independent trajectories with per-index RNG streams."""
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    config = config or EngineConfig()
    rngs = [trajectory_rng(master_seed, k) for k in range(n_traj)]
    seeds = [(master_seed, k) for k in range(n_traj)]
    if opset.state_dependent:
        init = np.broadcast_to(np.asarray(initial, dtype=complex), (n_traj, np.size(initial)))
        return sample_ensemble_state_dependent(init, opset, duration, rngs, config, seeds=seeds)
    cache = {}
    return [
        _sample_fixed(initial, opset, duration, seeds[k], config, rngs[k], cache=cache)
        for k in range(n_traj)
    ]


def ensemble_atom_states(trajs) -> tuple:
    """Mean reduced atomic state at the common snapshot times."""
    times = trajs[0].snapshot_times
    acc = np.zeros((len(times), 2, 2), dtype=complex)
    for tr in trajs:
        acc += tr.atom_snapshots()
    return times, acc / len(trajs)


def build_direct_detection(params: AtomParams) -> MeasurementOpSet:
    """Direct photodetection of all fluorescence: ``J = sqrt(gamma) sigma``."""
    g = -0.5j * params.omega * SIGMA_X - 0.5 * params.gamma * dag(SIGMA) @ SIGMA
    channels = [Channel("direct", math.sqrt(params.gamma) * SIGMA)] if params.gamma > 0 else []
    return MeasurementOpSet(g, channels, dims=(2,), name="direct")
