"""Homodyne jumps that always land on the state orthogonal to the current one."""
import numpy as np

from qjumps.atom import PLUS, AtomParams
from qjumps.engine import EngineConfig, sample_trajectory
from qjumps.homodyne import (
    build_orthogonal_set,
    dressed_error,
    orthogonal_error,
    orthogonal_fixed_points,
    orthogonal_linearized_eigenvalues,
)

atom = AtomParams(1.0, 10.0)
tp, tm = orthogonal_fixed_points(atom)
print("fixed states:", np.round(tp, 4), np.round(tm, 4))
print("linearized eigenvalues:", np.round(orthogonal_linearized_eigenvalues(atom), 4))

cfg = EngineConfig(dt_max=0.002, snapshot_interval=0.015)
tr = sample_trajectory(PLUS, build_orthogonal_set(atom), 15.0, seed=7, config=cfg)
print(f"{len(tr)} jumps, mean snapshot error {dressed_error(tr.snapshots).mean():.5f}")

for omega in (5.0, 10.0, 20.0):
    a = AtomParams(1.0, omega)
    est = orthogonal_error(a, 40, 20.0, 2.0, 8, dt_max=0.02 / omega)
    print(f"Omega={omega:5.1f}  error {est.mean:.2e} +- {est.stderr:.1e}  3(gamma/2Omega)^2 = {3 / (2 * omega) ** 2:.2e}")
