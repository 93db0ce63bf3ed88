"""Presets, output files, the Bloch-sphere locus and a small scaling fit."""
import json
import tempfile
from pathlib import Path

from qjumps.harness import emit_bloch_locus, make_config, run_experiment, run_scaling

out = Path(tempfile.mkdtemp())
res = run_experiment(make_config(preset="fig4", out=str(out / "fig4"), workers=1))
print("wrote", res.summary_path, "and", len(res.csv_paths), "trajectory file(s)")
print(json.dumps(res.summary["statistics"], indent=1))

rows = emit_bloch_locus(out / "locus.csv", n=50)
print(len(rows), "locus rows; markers:", [r[:2] for r in rows if r[5] in ("dressed", "tm")])

cfg = make_config(preset="two-state-scaling", trajectories=8, duration=40.0, workers=1)
rep = run_scaling(cfg)
# the two-state error is gamma^2/(4 Omega^2 + 2 gamma^2), not a pure power law, and its Monte Carlo
# spread is rounding noise, so chi2/dof is huge; compare with the closed form instead
print(f"two-state error exponent {rep.exponent:.3f} +- {rep.exponent_stderr:.3f}")
for w, e, a in zip(rep.abscissae, rep.errors, (p["analytic"] for p in rep.extra["points"])):
    print(f"Omega={w:5.1f}  Monte Carlo {e:.6e}  closed form {a:.6e}")
