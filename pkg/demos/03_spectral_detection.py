"""Two sideband filter cavities between the atom and the detectors.

A passed photon from the filter tuned to +Omega leaves the atom in |->, one
from the -Omega filter in |+>.  The trace below shows the probability of |->
along one record together with the detections.
"""
import warnings

import numpy as np

from qjumps.atom import AtomParams
from qjumps.filters import (
    RegimeWarning,
    build_two_filter,
    dressed_populations,
    error_budget,
    optimal_linewidth,
    sideband_alternation,
    sideband_filters,
    simulate_spectral,
    slow_states,
)
from qjumps.engine import EngineConfig

atom = AtomParams(1.0, 50.0)
hw = 8.0
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RegimeWarning)
    print("error budget at Gamma=8:", error_budget(atom, hw))
    print("best half-width:", round(optimal_linewidth(atom), 3))

system = build_two_filter(atom, *sideband_filters(atom, hw, n_max=3))
start = slow_states(system)[0].vector(normalize=True)
tr = simulate_spectral(system, 20.0, 4, start, EngineConfig(snapshot_interval=0.25))
pm = dressed_populations(tr)[:, 1]
for t, p in zip(tr.snapshot_times[::4], pm[::4]):
    print(f"t={t:5.2f}  P(-)={p:.3f}  " + "#" * int(40 * p))
print("detections:", " ".join(tr.event_labels))
v, n = sideband_alternation(tr.event_labels)
print(f"non-alternating sideband pairs: {v} of {n}")
