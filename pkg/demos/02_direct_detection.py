"""Direct photodetection trajectories average to the master equation."""
import math

import numpy as np

from qjumps.atom import GROUND, AtomParams, propagate_master, trace_distance
from qjumps.engine import EngineConfig, build_direct_detection, ensemble_atom_states, sample_ensemble, sample_trajectory

atom = AtomParams(1.0, 3.0)
ops = build_direct_detection(atom)

tr = sample_trajectory(GROUND, ops, 10.0, seed=3, config=EngineConfig(snapshot_interval=0.5))
print("jump times:", np.round(tr.event_times, 3))
print("excited population:", np.round(np.abs(tr.snapshots[:, 1]) ** 2, 3))

n = 800
trs = sample_ensemble(GROUND, ops, 4.0, n, 11, EngineConfig(snapshot_interval=0.5, store_event_states=False))
times, mean = ensemble_atom_states(trs)
rho0 = np.diag([1.0, 0.0]).astype(complex)
for t, m in zip(times, mean):
    d = trace_distance(m, propagate_master(rho0, atom, t))
    print(f"t={t:4.1f}  trace distance {d:.4f}  (statistical scale {1 / math.sqrt(n):.4f})")
