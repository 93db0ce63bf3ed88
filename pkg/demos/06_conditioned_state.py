"""Atomic state right after a photon passes a filter tuned to the upper sideband."""
import numpy as np

from qjumps.atom import AtomParams
from qjumps.conditioned import conditioned_state, conditioned_state_full, narrow_cavity_limit
from qjumps.filters import FilterConfig, epsilon_app_perturbative

atom = AtomParams(1.0, 200.0)
for hw in (2.0, 5.0, 10.0, 17.1, 30.0, 60.0):
    filt = FilterConfig(hw, atom.omega, 3)
    res = conditioned_state(atom, filt)
    full = conditioned_state_full(atom, filt)
    dev = np.abs(res.rho2.as_array() - full.as_array()).max()
    print(f"Gamma={hw:5.1f}  eps_app={res.epsilon_app:.5f}  perturbative={epsilon_app_perturbative(atom, hw):.5f}"
          f"  full-model deviation {dev:.1e}")

nc = narrow_cavity_limit(AtomParams(1.0, 100.0), 0.01, 0.0)
print(f"narrow cavity: x={nc.x:.4f}, weight {nc.weight:.3e}")
