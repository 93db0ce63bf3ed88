"""Stationary fluorescence of a driven atom and its two classical jump pictures.

The ensemble state is diagonalized and the jump rates between its eigenstates
are compared with the dressed-state picture, in which the atom alternates
between |+> and |-> on sideband emissions.
"""
import numpy as np

from qjumps.atom import AtomParams, lindblad_ops, stationary_bloch, stationary_state, tm_diagonalize
from qjumps.reference import simulate_dressed, simulate_tm, tm_ensemble, tm_rates

for omega in (0.5, 2.0, 10.0, 50.0):
    atom = AtomParams(gamma=1.0, omega=omega)
    b = stationary_bloch(atom)
    ens = tm_diagonalize(stationary_state(atom))
    r = tm_rates(tm_ensemble(atom), lindblad_ops(atom)).rates
    print(f"Omega={omega:5.1f}  bloch=({b.x:+.4f},{b.y:+.4f},{b.z:+.4f})  "
          f"weights={np.round(ens.weights, 4)}  R21={r[1, 0]:.4f} R12={r[0, 1]:.4f}")

atom = AtomParams(1.0, 50.0)
for name, sim in (("tm", simulate_tm), ("dressed", simulate_dressed)):
    tr = sim(atom, 2e4, seed=1)
    rates = {k: round(float(v), 4) for k, v in tr.conditional_rates().items()}
    print(f"{name:8s} {len(tr)} photons, total rate {len(tr) / tr.duration:.4f}, per channel {rates}")
