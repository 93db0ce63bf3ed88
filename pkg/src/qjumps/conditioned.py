"""Average atomic state just after a photon passed by a filter cavity is detected.

With ``W`` the stationary joint state of atom and filter, the conditioned
atomic state is ``Tr_cav[a W a^dag]`` up to normalization.  Its Bloch vector
follows from a chain of three stationary solves, each against the 4x4 Bloch
generator ``L`` of the bare atom:

    rho_0 = stationary state,
    rho_1 = Tr_cav[a W]          from  (L - i w_a - Gamma) rho_1 = sqrt(g Gamma) sigma rho_0,
    rho_2 = Tr_cav[a W a^dag]    from  (L - 2 Gamma) rho_2 = sqrt(g Gamma) (rho_1 sigma^dag + sigma rho_1^dag).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .atom import AtomParams, BlochVector, bloch_superoperator, stationary_bloch, steady_state
from .filters import FilterConfig, RegimeWarning, build_one_filter


@dataclass(frozen=True)
class ConditionedResult:
    """Unnormalized conditioned Bloch vector ``rho2`` (``p`` is the detection weight)."""

    rho2: BlochVector
    rho1: BlochVector
    epsilon_app: float
    regime: dict = field(default_factory=dict)

    @property
    def normalized(self) -> BlochVector:
        v = self.rho2.as_array() / self.rho2.p
        return BlochVector.from_array(v)

    def state_matrix(self) -> np.ndarray:
        return self.normalized.to_matrix()


def sigma_rho_source(r0: np.ndarray) -> np.ndarray:
    """Bloch components of ``sigma rho_0`` for a real Bloch vector ``(p, x, y, z)``."""
    p, x, y, z = r0
    return 0.5 * np.array([x - 1j * y, p + z, -1j * p - 1j * z, -x + 1j * y])


def rho1_source(r1: np.ndarray) -> np.ndarray:
    """Bloch components of ``rho_1 sigma^dag + sigma rho_1^dag`` for complex ``rho_1``."""
    p, x, y, z = r1
    return np.array([x.real - y.imag, p.real + z.real, -p.imag - z.imag, -x.real + y.imag])


def _regime(atom: AtomParams, filt: FilterConfig) -> dict:
    g, w, G = atom.gamma, atom.omega, filt.hwhm
    return {
        "strong_driving": w > 2 * max(G, g),
        "broad_filter": G > 2 * g,
        "narrow_filter": G < 0.5 * g,
    }


def conditioned_state(atom: AtomParams, filt: FilterConfig) -> ConditionedResult:
    """Conditioned atomic Bloch vector after a passed-photon detection."""
    if not (atom.gamma > 0 and filt.hwhm > 0):
        raise ValueError("need gamma > 0 and Gamma > 0")
    lv = bloch_superoperator(atom).astype(complex)
    eye = np.eye(4)
    coupling = math.sqrt(atom.gamma * filt.hwhm)
    r0 = stationary_bloch(atom).as_array().astype(float)
    r1 = coupling * linalg.solve_linear(lv - (1j * filt.detuning + filt.hwhm) * eye, sigma_rho_source(r0))
    r2 = coupling * linalg.solve_linear(lv - 2 * filt.hwhm * eye, rho1_source(r1).astype(complex))
    r2 = r2.real
    eps = (r2[1] + r2[0]) / (2 * r2[0]) if r2[0] > 0 else float("nan")
    return ConditionedResult(
        rho2=BlochVector(*[float(c) for c in r2]),
        rho1=BlochVector(*[complex(c) for c in r1]),
        epsilon_app=float(eps),
        regime=_regime(atom, filt),
    )


def conditioned_state_full(atom: AtomParams, filt: FilterConfig) -> BlochVector:
    """Same quantity from the null vector of the full truncated joint Liouvillian."""
    from .linalg import partial_trace

    system = build_one_filter(atom, filt)
    w = steady_state(system.hamiltonian(), system.lindblad_ops())
    a = system.ops["a"]
    rho2 = partial_trace(a @ w @ a.conj().T, system.dims, 0)
    return BlochVector.from_matrix(rho2)


@dataclass(frozen=True)
class NarrowCavityResult:
    lorentzian: float
    x: float
    weight: float
    regime_ok: bool


def narrow_cavity_limit(atom: AtomParams, hwhm: float, delta: float) -> NarrowCavityResult:
    """Conditioning through a filter much narrower than the atomic linewidth.

    The filter sits at ``Omega + delta``.  Returns the Lorentzian factor
    ``(3g/4)^2 / (delta^2 + (3g/4)^2)``, the normalized ``x`` of the
    conditioned state (about ``-4 Gamma / g``) and the raw detection weight.
    """
    g = atom.gamma
    ok = hwhm < 0.5 * g and atom.omega > 10 * g and abs(delta) < 0.1 * atom.omega
    if not ok:
        warnings.warn("narrow-cavity limit needs Gamma << gamma << Omega and small delta", RegimeWarning, stacklevel=2)
    res = conditioned_state(atom, FilterConfig(hwhm, atom.omega + delta, 1))
    hw = 0.75 * g
    return NarrowCavityResult(
        lorentzian=hw * hw / (delta * delta + hw * hw),
        x=res.rho2.x / res.rho2.p,
        weight=res.rho2.p,
        regime_ok=ok,
    )


def transit_average_x(atom: AtomParams, hwhm: float) -> float:
    """``-int 2G exp(-2G t) exp(-g t/2) dt = -4G/(4G + g)``."""
    return -4 * hwhm / (4 * hwhm + atom.gamma)
