"""Adaptive homodyne detection that keeps the atom in one of two states.

The local oscillator amplitude flips between +1/2 and -1/2 at every detection,
and the atom jumps between two fixed states close to the dressed states.
"""
import numpy as np

from qjumps.atom import AtomParams
from qjumps.homodyne import (
    solve_two_state_mu,
    two_state_error_analytic,
    two_state_stability,
    two_state_stability_mc,
    simulate_two_state,
)

for omega in (2.0, 10.0, 50.0):
    atom = AtomParams(1.0, omega)
    mp, mm = solve_two_state_mu(atom)
    print(f"Omega={omega:5.1f}  mu=({mp.real:+.6f},{mm.real:+.6f})  dressed error {two_state_error_analytic(atom):.3e}")

atom = AtomParams(1.0, 50.0)
tr = simulate_two_state(atom, 40.0, seed=2)
print("detections:", len(tr), "oscillator history:", tr.meta["mu_history"][:6], "...")

# an admixture of the unstable state shrinks to a fifth after one detection
for q in (0.2, 0.5, 1.0):
    p = np.sqrt(1 - q * q)
    print(f"|q|^2={q * q:.2f} -> {two_state_stability(atom, p, q):.4f}  (|q|^2/5 = {q * q / 5:.4f})")
m, se = two_state_stability_mc(atom, 0.0, 1.0, 2000, seed=1)
print(f"Monte Carlo at q=1: {m:.4f} +- {se:.4f}")
