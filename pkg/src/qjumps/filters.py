"""Spectral detection of the fluorescence through one or two filter cavities.

The atom drives the filter(s) unidirectionally.  Joint kets are ordered
``atom (x) cavity a (x) cavity b`` with cavities truncated at ``n_max``
photons.  Rejected light (front mirror of every cavity, plus the atom) is
channel ``"1"``; light passed by cavity ``a`` or ``b`` is channel ``"a"`` or
``"b"``.

The long-lived eigenstates of the no-jump generator are built from the
photon-number recurrences over the atomic basis

    |h> = mu|g> + nu|e>,   |l> = nu|g> - mu|e>,

the eigenvectors of the atomic part of the generator.  Because the cascade
generator only ever adds photons (or moves them from ``a`` to ``b``), the
recurrence vectors are exact eigenvectors of the truncated generator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .atom import GROUND, MINUS, PLUS, SIGMA, SIGMA_X, AtomParams, dag
from .engine import Channel, EngineConfig, MeasurementOpSet, QuantumTrajectory, sample_trajectory
from .reference import PASSED_A, PASSED_B, REJECTED


class RegimeWarning(UserWarning):
    """Parameters are outside the ``Omega >> Gamma >> gamma`` regime."""


class DegenerateRecurrenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FilterConfig:
    """Filter cavity with half-width ``hwhm`` (linewidth ``2*hwhm``) and detuning."""

    hwhm: float
    detuning: float = 0.0
    n_max: int = 3

    def __post_init__(self):
        if not self.hwhm > 0:
            raise ValueError(f"filter half-width must be positive, got {self.hwhm}")
        if not math.isfinite(self.detuning):
            raise ValueError("detuning must be finite")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"Fock truncation n_max must be an integer >= 1, got {self.n_max}")


@dataclass
class CascadeSystem:
    atom: AtomParams
    filters: tuple
    opset: MeasurementOpSet
    ops: dict = field(default_factory=dict)

    @property
    def dims(self) -> tuple:
        return self.opset.dims

    @property
    def joint_dim(self) -> int:
        return self.opset.dim

    @property
    def generator(self) -> np.ndarray:
        return self.opset.generator

    def lindblad_ops(self) -> list:
        return [ch.op for ch in self.opset.channels]

    def hamiltonian(self) -> np.ndarray:
        """``H = i (G + sum J^dag J / 2)``, the Hamiltonian of the joint master equation."""
        g = self.generator
        acc = g + 0.5 * sum(dag(j) @ j for j in self.lindblad_ops())
        return 1j * acc

    def liouvillian(self) -> np.ndarray:
        from .atom import liouvillian

        return liouvillian(self.hamiltonian(), self.lindblad_ops())

    def vacuum(self, atom_state=GROUND) -> np.ndarray:
        cav = np.zeros(self.joint_dim // 2, dtype=complex)
        cav[0] = 1.0
        return np.kron(np.asarray(atom_state, dtype=complex), cav)


def _ladder(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), 1).astype(complex)


def build_one_filter(atom: AtomParams, filt: FilterConfig) -> CascadeSystem:
    """Atom feeding a single filter cavity ``a``."""
    n = filt.n_max + 1
    ida, id2 = np.eye(n), np.eye(2)
    s = linalg.kron(SIGMA, ida)
    sx = linalg.kron(SIGMA_X, ida)
    a = linalg.kron(id2, _ladder(filt.n_max))
    g_, gam = atom.gamma, filt.hwhm
    ad = dag(a)
    gen = -1j * (filt.detuning * ad @ a + 0.5 * atom.omega * sx) - (
        0.5 * g_ * dag(s) @ s + gam * ad @ a + math.sqrt(g_ * gam) * ad @ s
    )
    channels = [
        Channel(REJECTED, math.sqrt(g_) * s + math.sqrt(gam) * a),
        Channel(PASSED_A, math.sqrt(gam) * a),
    ]
    opset = MeasurementOpSet(gen, channels, dims=(2, n), name="spectral-1")
    return CascadeSystem(atom, (filt,), opset, ops={"sigma": s, "a": a})


def build_two_filter(atom: AtomParams, fa: FilterConfig, fb: FilterConfig) -> CascadeSystem:
    """Atom feeding cavity ``a``, whose front-mirror output feeds cavity ``b``.

    Both cavities must share the half-width; their truncations may differ.
    """
    if not math.isclose(fa.hwhm, fb.hwhm, rel_tol=1e-12):
        raise ValueError("the two filters must have equal half-widths")
    na, nb = fa.n_max + 1, fb.n_max + 1
    id2 = np.eye(2)
    s = linalg.kron(SIGMA, np.eye(na), np.eye(nb))
    sx = linalg.kron(SIGMA_X, np.eye(na), np.eye(nb))
    a = linalg.kron(id2, _ladder(fa.n_max), np.eye(nb))
    b = linalg.kron(id2, np.eye(na), _ladder(fb.n_max))
    g_, gam = atom.gamma, fa.hwhm
    ad, bd = dag(a), dag(b)
    rt = math.sqrt(g_ * gam)
    gen = -1j * (fa.detuning * ad @ a + fb.detuning * bd @ b + 0.5 * atom.omega * sx) - (
        0.5 * g_ * dag(s) @ s + gam * ad @ a + gam * bd @ b
    ) - (rt * ad @ s + gam * bd @ a + rt * bd @ s)
    channels = [
        Channel(REJECTED, math.sqrt(g_) * s + math.sqrt(gam) * (a + b)),
        Channel(PASSED_A, math.sqrt(gam) * a),
        Channel(PASSED_B, math.sqrt(gam) * b),
    ]
    opset = MeasurementOpSet(gen, channels, dims=(2, na, nb), name="spectral-2")
    return CascadeSystem(atom, (fa, fb), opset, ops={"sigma": s, "a": a, "b": b})


def sideband_filters(atom: AtomParams, hwhm: float, n_max: int = 3) -> tuple:
    """Filters tuned to the upper (``a``) and lower (``b``) Mollow sidebands."""
    return FilterConfig(hwhm, atom.omega, n_max), FilterConfig(hwhm, -atom.omega, n_max)


# ---------------------------------------------------------------- recurrences


@dataclass(frozen=True)
class AtomicBasis:
    """Non-orthogonal eigenbasis ``|h>, |l>`` of the atomic no-jump generator."""

    mu: complex
    nu: complex
    p: complex
    q: complex
    lam_h: complex
    lam_l: complex

    @property
    def h(self) -> np.ndarray:
        return np.array([self.mu, self.nu])

    @property
    def l(self) -> np.ndarray:
        return np.array([self.nu, -self.mu])


def atomic_basis(atom: AtomParams) -> AtomicBasis:
    g, w = atom.gamma, atom.omega
    if not w > g / 2:
        raise ValueError("the |h>, |l> basis needs Omega > gamma/2")
    ratio = math.sqrt(1 - g * g / (4 * w * w)) - 0.5j * g / w
    mu = 1 / math.sqrt(1 + abs(ratio) ** 2)
    nu = ratio * mu
    den = mu * mu + nu * nu
    root = math.sqrt(w * w - g * g / 4)
    return AtomicBasis(mu, nu, nu * nu / den, mu * nu / den, -g / 4 - 0.5j * root, -g / 4 + 0.5j * root)


def strong_driving_basis(atom: AtomParams) -> AtomicBasis:
    """The ``gamma/Omega -> 0`` limit: dressed states and ``p = q = 1/2``."""
    g, w = atom.gamma, atom.omega
    r = 1 / math.sqrt(2)
    return AtomicBasis(r, r, 0.5, 0.5, -g / 4 - 0.5j * w, -g / 4 + 0.5j * w)


@dataclass
class RecurrenceEigenstate:
    """Eigenvector of the cascade no-jump generator in recurrence form.

    ``h[j]`` / ``l[j]`` (one filter) or ``h[j, k]`` / ``l[j, k]`` (two filters)
    are the amplitudes on ``|h>|j>`` and ``|l>|j>`` (resp. ``|j>|k>``).
    ``truncation_norm`` is the squared norm of the first shell of amplitudes
    beyond ``n_max`` that the truncation drops.
    """

    label: tuple
    h: np.ndarray
    l: np.ndarray
    eigenvalue: complex
    basis: AtomicBasis
    truncation_norm: float = 0.0

    @property
    def dims(self) -> tuple:
        return (2,) + self.h.shape

    def vector(self, normalize: bool = False) -> np.ndarray:
        """Amplitudes in the joint ``(|g>, |e>) (x) Fock`` basis."""
        b = self.basis
        g_amp = b.mu * self.h + b.nu * self.l
        e_amp = b.nu * self.h - b.mu * self.l
        v = np.concatenate([g_amp.ravel(), e_amp.ravel()])
        return v / np.linalg.norm(v) if normalize else v

    def dressed_amplitudes(self) -> tuple:
        """Amplitudes on ``|+>`` and ``|->`` for each Fock index (exact projection)."""
        v = self.vector().reshape((2,) + self.h.shape)
        plus = np.tensordot(PLUS.conj(), v, axes=(0, 0))
        minus = np.tensordot(MINUS.conj(), v, axes=(0, 0))
        return plus, minus


def _lambda(filt: FilterConfig) -> complex:
    return -filt.hwhm - 1j * filt.detuning


def _check_den(den, scale):
    if abs(den) < 1e-12 * scale:
        raise DegenerateRecurrenceError(f"resonant recurrence denominator {abs(den):.2e}")
    return den


def _one_chain(basis, lam_a, gamma, hwhm, n, branch, size, scale):
    sig = (basis.lam_h if branch > 0 else basis.lam_l) + n * lam_a
    h = np.zeros(size, dtype=complex)
    l = np.zeros(size, dtype=complex)
    h[n], l[n] = (1.0, 0.0) if branch > 0 else (0.0, 1.0)
    p, q = basis.p, basis.q
    for j in range(n + 1, size):
        c = math.sqrt(gamma * hwhm * j)
        h[j] = c * (q * h[j - 1] + (p - 1) * l[j - 1]) / _check_den(basis.lam_h + lam_a * j - sig, scale)
        l[j] = c * (p * h[j - 1] - q * l[j - 1]) / _check_den(basis.lam_l + lam_a * j - sig, scale)
    return h, l, sig


def _branch(branch) -> int:
    if branch in (+1, "+"):
        return 1
    if branch in (-1, "-"):
        return -1
    raise ValueError(f"branch must be + or -, got {branch!r}")


def solve_recurrence_one(system: CascadeSystem, n: int, branch, approximate: bool = False) -> RecurrenceEigenstate:
    """Eigenstate ``S_n^+-`` of the one-filter generator.

    With ``approximate=True`` the strong-driving recurrences (dressed basis,
    ``p = q = 1/2``) are used instead of the exact ones.
    """
    if len(system.filters) != 1:
        raise ValueError("expected a one-filter system")
    filt = system.filters[0]
    br = _branch(branch)
    if not 0 <= n <= filt.n_max:
        raise ValueError(f"n must lie in [0, {filt.n_max}]")
    atom = system.atom
    basis = strong_driving_basis(atom) if approximate else atomic_basis(atom)
    lam_a = _lambda(filt)
    scale = max(atom.rate_scale, filt.hwhm, abs(filt.detuning))
    h, l, sig = _one_chain(basis, lam_a, atom.gamma, filt.hwhm, n, br, filt.n_max + 2, scale)
    dropped = float(abs(h[-1]) ** 2 + abs(l[-1]) ** 2)
    return RecurrenceEigenstate((n, "+" if br > 0 else "-"), h[:-1], l[:-1], sig, basis, dropped)


def _two_grid(basis, lam_a, lam_b, gamma, hwhm, n, m, branch, size, scale):
    sig = (basis.lam_h if branch > 0 else basis.lam_l) + n * lam_a + m * lam_b
    h = np.zeros((size, size), dtype=complex)
    l = np.zeros((size, size), dtype=complex)
    h[n, m], l[n, m] = (1.0, 0.0) if branch > 0 else (0.0, 1.0)
    p, q = basis.p, basis.q
    rt = math.sqrt(gamma * hwhm)
    for k in range(m, size):
        j0 = n + 1 if k == m else max(n - k + m, 0)
        for j in range(j0, size):
            sh = sl = 0.0
            if j > 0:
                c = rt * math.sqrt(j)
                sh += c * (q * h[j - 1, k] + (p - 1) * l[j - 1, k])
                sl += c * (p * h[j - 1, k] - q * l[j - 1, k])
            if k > 0:
                c = rt * math.sqrt(k)
                sh += c * (q * h[j, k - 1] + (p - 1) * l[j, k - 1])
                sl += c * (p * h[j, k - 1] - q * l[j, k - 1])
                if j + 1 < size:
                    c = hwhm * math.sqrt(k * (j + 1))
                    sh += c * h[j + 1, k - 1]
                    sl += c * l[j + 1, k - 1]
            base = lam_a * j + lam_b * k - sig
            h[j, k] = sh / _check_den(basis.lam_h + base, scale)
            l[j, k] = sl / _check_den(basis.lam_l + base, scale)
    return h, l, sig


def solve_recurrence_two(system: CascadeSystem, n: int, m: int, branch, approximate: bool = False) -> RecurrenceEigenstate:
    """Eigenstate ``S_nm^+-`` of the two-filter generator.

    The sweep runs over ``k`` from ``m`` upward and, for each ``k``, over
    ``j`` from ``max(n - k + m, 0)`` upward (``j > n`` on the first row).
    """
    if len(system.filters) != 2:
        raise ValueError("expected a two-filter system")
    fa, fb = system.filters
    if fa.n_max != fb.n_max:
        raise ValueError("recurrence assembly needs equal truncations")
    br = _branch(branch)
    if not (0 <= n <= fa.n_max and 0 <= m <= fb.n_max):
        raise ValueError("n, m must not exceed the truncation")
    atom = system.atom
    basis = strong_driving_basis(atom) if approximate else atomic_basis(atom)
    scale = max(atom.rate_scale, fa.hwhm, abs(fa.detuning), abs(fb.detuning))
    args = (basis, _lambda(fa), _lambda(fb), atom.gamma, fa.hwhm, n, m, br)
    size = fa.n_max + 1
    h, l, sig = _two_grid(*args, size, scale)
    # first shell beyond the truncation, for the dropped-norm diagnostic
    he, le, _ = _two_grid(*args, size + 1, scale)
    dropped = float(np.sum(np.abs(he[size, :]) ** 2 + np.abs(le[size, :]) ** 2)
                    + np.sum(np.abs(he[:size, size]) ** 2 + np.abs(le[:size, size]) ** 2))
    return RecurrenceEigenstate((n, m, "+" if br > 0 else "-"), h, l, sig, basis, dropped)


def eigen_residual(system: CascadeSystem, state: RecurrenceEigenstate) -> float:
    """``||G S - sigma S|| / ||S||``."""
    v = state.vector()
    r = system.generator @ v - state.eigenvalue * v
    return float(np.linalg.norm(r) / np.linalg.norm(v))


def slow_states(system: CascadeSystem) -> tuple:
    """The long-lived pair ``(S^+, S^-)`` with zero photon labels."""
    if len(system.filters) == 1:
        return solve_recurrence_one(system, 0, "+"), solve_recurrence_one(system, 0, "-")
    return solve_recurrence_two(system, 0, 0, "+"), solve_recurrence_two(system, 0, 0, "-")


def closed_form_s0(atom: AtomParams, hwhm: float, branch) -> dict:
    """Strong-driving one-filter amplitudes keyed by ``(dressed, j)``."""
    g, w, G = atom.gamma, atom.omega, hwhm
    a = math.sqrt(g) / (2 * math.sqrt(G))
    b = math.sqrt(G * g) / w
    if _branch(branch) > 0:
        return {("+", 0): 1.0, ("-", 1): -a, ("+", 1): 0.5j * b}
    return {("-", 0): 1.0, ("+", 1): -0.25j * b, ("-", 1): -0.5j * b}


def closed_form_s00(atom: AtomParams, hwhm: float, branch) -> dict:
    """Strong-driving two-filter amplitudes keyed by ``(dressed, j, k)``."""
    g, w, G = atom.gamma, atom.omega, hwhm
    a = math.sqrt(g) / (2 * math.sqrt(G))
    b = math.sqrt(G * g) / w
    c = g / (8 * G)
    if _branch(branch) > 0:
        return {("+", 0, 0): 1.0, ("-", 1, 0): -a, ("+", 1, 0): 0.5j * b, ("+", 0, 1): -0.5j * b, ("+", 1, 1): -c}
    return {
        ("-", 0, 0): 1.0,
        ("+", 0, 1): a,
        ("-", 0, 1): 0.5j * b,
        ("-", 1, 0): -0.5j * b,
        ("+", 1, 0): -0.25j * b,
        ("-", 1, 1): -c,
    }


def compare_closed_form(state: RecurrenceEigenstate, closed: dict) -> dict:
    """Relative deviation of each closed-form amplitude from the recurrence."""
    plus, minus = state.dressed_amplitudes()
    ref_key = next(k for k, v in closed.items() if v == 1.0)
    norm = (plus if ref_key[0] == "+" else minus)[ref_key[1:]]
    out = {}
    for key, val in closed.items():
        exact = (plus if key[0] == "+" else minus)[key[1:]] / norm
        out[key] = abs(exact - val) / abs(val)
    return out


@dataclass(frozen=True)
class JumpAction:
    overlap_plus: float
    overlap_minus: float
    rate: float


def _overlap2(u, v) -> float:
    return float(abs(np.vdot(u, v)) ** 2 / (np.vdot(u, u).real * np.vdot(v, v).real))


def jump_action_table(system: CascadeSystem, state: RecurrenceEigenstate) -> dict:
    """Per channel: squared overlaps of the post-jump state with ``S^+-`` and the rate."""
    sp, sm = (s.vector() for s in slow_states(system))
    v = state.vector(normalize=True)
    out = {}
    for ch in system.opset.channels:
        post = ch.op @ v
        rate = float(np.vdot(post, post).real)
        if rate == 0:
            out[ch.label] = JumpAction(0.0, 0.0, 0.0)
            continue
        out[ch.label] = JumpAction(_overlap2(sp, post), _overlap2(sm, post), rate)
    return out


# ---------------------------------------------------------------- error budget


@dataclass(frozen=True)
class ErrorBudget:
    wrong: float
    transient: float
    forbidden: float
    entangled: float
    total: float
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("wrong", "transient", "forbidden", "entangled", "total"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} error {v} is not a probability")


def _regime_check(atom: AtomParams, hwhm: float):
    if not (atom.omega > 2 * hwhm and hwhm > 2 * atom.gamma):
        warnings.warn(
            f"Omega={atom.omega}, Gamma={hwhm}, gamma={atom.gamma} is outside Omega >> Gamma >> gamma",
            RegimeWarning,
            stacklevel=3,
        )


def error_budget(atom: AtomParams, hwhm: float, alpha: float = 1.0, beta: float = 1.0) -> ErrorBudget:
    """The four spectral-detection error terms and ``alpha G^2/W^2 + beta g/(4G)``."""
    if not hwhm > 0 or not atom.omega > 0:
        raise ValueError("need Gamma > 0 and Omega > 0")
    _regime_check(atom, hwhm)
    g, w, G = atom.gamma, atom.omega, hwhm
    r2 = G * G / (w * w)
    return ErrorBudget(
        wrong=r2,
        transient=g / (8 * G),
        forbidden=0.5 * r2 + g / (32 * G),
        entangled=g / (4 * G),
        total=alpha * r2 + beta * g / (4 * G),
        alpha=alpha,
        beta=beta,
    )


def optimal_linewidth(atom: AtomParams, alpha: float = 1.0, beta: float = 1.0) -> float:
    """Half-width minimizing the total error; ``2 Gamma = W^(2/3) g^(1/3)`` when alpha = beta."""
    return 0.5 * (beta / alpha) ** (1 / 3) * atom.omega ** (2 / 3) * atom.gamma ** (1 / 3)


def epsilon_app_perturbative(atom: AtomParams, hwhm: float) -> float:
    _regime_check(atom, hwhm)
    return 1.25 * hwhm**2 / atom.omega**2 + atom.gamma / (8 * hwhm)


def fit_error_coefficients(omegas, hwhms, errors, gamma: float = 1.0, weights=None) -> tuple:
    """Least-squares ``(alpha, beta)`` of ``err = alpha G^2/W^2 + beta g/(4G)``."""
    w = np.asarray(omegas, float)
    G = np.asarray(hwhms, float)
    e = np.asarray(errors, float)
    if not (w.shape == G.shape == e.shape) or e.size < 2:
        raise ValueError("need at least two matching (Omega, Gamma, error) points")
    design = np.column_stack([G**2 / w**2, gamma / (4 * G)])
    sw = np.ones_like(e) if weights is None else np.sqrt(np.asarray(weights, float))
    coef, *_ = np.linalg.lstsq(design * sw[:, None], e * sw, rcond=None)
    return float(coef[0]), float(coef[1])


# ---------------------------------------------------------------- simulation


def simulate_spectral(
    system: CascadeSystem,
    duration: float,
    seed,
    initial: Optional[np.ndarray] = None,
    config: Optional[EngineConfig] = None,
    rng=None,
) -> QuantumTrajectory:
    """Spectral-detection trajectory, by default started in ``S^+``."""
    if initial is None:
        initial = slow_states(system)[0].vector(normalize=True)
    return sample_trajectory(initial, system.opset, duration, seed, config, rng=rng)


# dressed-state bookkeeping rules: what each detection does to the predicted state
SIDEBAND_RULE = {PASSED_A: "minus", PASSED_B: "plus", REJECTED: "stay"}
CENTRAL_FILTER_RULE = {PASSED_A: "stay", REJECTED: "flip"}


def predicted_dressed(traj: QuantumTrajectory, rule: dict, initial: int = 0) -> np.ndarray:
    """Dressed state (0 = ``|+>``, 1 = ``|->``) predicted at each snapshot time."""
    pred = np.empty(len(traj.snapshot_times), dtype=int)
    cur = initial
    k = 0
    for i, t in enumerate(traj.snapshot_times):
        while k < len(traj.event_times) and traj.event_times[k] <= t:
            act = rule[traj.event_labels[k]]
            cur = {"minus": 1, "plus": 0, "stay": cur, "flip": 1 - cur}[act]
            k += 1
        pred[i] = cur
    return pred


def dressed_populations(traj: QuantumTrajectory) -> np.ndarray:
    """``(<+|rho|+>, <-|rho|->)`` of the reduced atomic state at each snapshot."""
    rho = traj.atom_snapshots()
    pp = np.einsum("i,nij,j->n", PLUS.conj(), rho, PLUS).real
    pm = np.einsum("i,nij,j->n", MINUS.conj(), rho, MINUS).real
    return np.column_stack([pp, pm])


def tracking_agreement(traj: QuantumTrajectory, rule: dict, initial: int = 0) -> np.ndarray:
    """Population of the predicted dressed state at each snapshot."""
    pred = predicted_dressed(traj, rule, initial)
    pops = dressed_populations(traj)
    return pops[np.arange(len(pred)), pred]


def sideband_alternation(labels) -> tuple:
    """``(violations, pairs)`` over consecutive sideband detections (``a``/``b`` only)."""
    side = [x for x in labels if x in (PASSED_A, PASSED_B)]
    pairs = max(len(side) - 1, 0)
    viol = sum(1 for u, v in zip(side, side[1:]) if u == v)
    return viol, pairs


@dataclass(frozen=True)
class TrackingEstimate:
    """Dressed-state tracking error of a spectral-detection ensemble."""

    mean: float
    stderr: float
    n_trajectories: int
    violations: int
    sideband_pairs: int

    @property
    def violation_fraction(self) -> float:
        return self.violations / self.sideband_pairs if self.sideband_pairs else float("nan")


def spectral_tracking_error(
    atom: AtomParams,
    hwhm: float,
    n_traj: int,
    duration: float,
    burn_in: float,
    master_seed,
    n_max: int = 3,
    snapshot_interval: float = 0.1,
    fock_guard: float = 1e-4,
) -> TrackingEstimate:
    """Probability that the atom is not in the dressed state the record predicts.

    Two sideband filters; an ``a`` detection predicts ``|->``, a ``b``
    detection ``|+>``, a rejected photon leaves the prediction unchanged.  The
    error is the time average over snapshots after ``burn_in`` of
    ``1 - <pred|rho_atom|pred>``; the standard error is over trajectories.
    Trajectories are generated and reduced one at a time.
    """
    from .engine import trajectory_rng

    system = build_two_filter(atom, *sideband_filters(atom, hwhm, n_max))
    start = slow_states(system)[0].vector(normalize=True)
    cfg = EngineConfig(snapshot_interval=snapshot_interval / atom.gamma, store_event_states=False,
                       fock_guard=fock_guard)
    means = np.empty(n_traj)
    viol = pairs = 0
    for k in range(n_traj):
        tr = simulate_spectral(system, duration, (master_seed, k), start, cfg, rng=trajectory_rng(master_seed, k))
        agree = tracking_agreement(tr, SIDEBAND_RULE, initial=0)
        means[k] = 1.0 - agree[tr.snapshot_times >= burn_in].mean()
        v, p = sideband_alternation(tr.event_labels)
        viol += v
        pairs += p
    se = means.std(ddof=1) / math.sqrt(n_traj) if n_traj > 1 else float("nan")
    return TrackingEstimate(float(means.mean()), float(se), n_traj, viol, pairs)
