"""Experiment configuration, presets, ensemble orchestration and output files.

A run produces one CSV per trajectory under ``<out>/trajectories`` with the
columns of :data:`CSV_COLUMNS` and a ``summary.json`` validated against the
packaged ``summary.schema.json``.  Every trajectory draws from its own random
stream keyed by its index, so outputs do not depend on the number of workers
or on the order in which they finish.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import yaml

from . import linalg
from .atom import GROUND, MINUS, PLUS, AtomParams, bloch_of_state, stationary_state, tm_diagonalize
from .conditioned import conditioned_state, conditioned_state_full
from .engine import (
    EngineConfig,
    NormUnderflowError,
    TruncationError,
    build_direct_detection,
    reduced_atom,
    sample_ensemble_state_dependent,
    sample_trajectory,
    trajectory_rng,
)
from .filters import (
    CENTRAL_FILTER_RULE,
    SIDEBAND_RULE,
    FilterConfig,
    RegimeWarning,
    atomic_basis,
    build_one_filter,
    build_two_filter,
    error_budget,
    optimal_linewidth,
    sideband_alternation,
    spectral_tracking_error,
    tracking_agreement,
)
from .homodyne import (
    build_orthogonal_set,
    orthogonal_error,
    orthogonal_fixed_points,
    simulate_two_state,
    simulate_two_state_ensemble,
    ensemble_dressed_error,
    two_state_error_analytic,
    two_state_states,
)
from .reference import simulate_dressed, simulate_tm

SCHEMES = ("tm", "dressed", "direct", "spectral-1", "spectral-2", "two-state", "orthogonal", "conditioned")
TRAJECTORY_SCHEMES = SCHEMES[:-1]
SCALING_SCHEMES = ("orthogonal", "two-state", "spectral-2")
CSV_COLUMNS = ("time", "channel", "bloch_x", "bloch_y", "bloch_z", "p_dressed_minus")
CSV_SCHEMA_VERSION = 1
SNAPSHOT = "snapshot"


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration (CLI exit code 2)."""


class NumericalAbort(RuntimeError):
    """A numerical guard stopped the run (CLI exit code 3)."""


def code_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        from . import __version__

        return __version__


# ---------------------------------------------------------------- configuration


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a run.

    Rates and times are in units of ``gamma``.  ``detunings`` are the filter
    centre frequencies relative to the atom (``spectral-1``: one value,
    default 0; ``spectral-2``: two values, default ``(+Omega, -Omega)``;
    ``conditioned``: one value, default ``+Omega``).
    ``hwhm`` defaults to ``Omega^(2/3) gamma^(1/3) / 2``.  ``substep`` is the
    RK4 step of state-dependent schemes in units of ``1/max(Omega, gamma)``.
    """

    scheme: str
    omega: float
    seed: Optional[int] = None
    gamma: float = 1.0
    hwhm: Optional[float] = None
    n_max: int = 3
    detunings: Optional[list] = None
    duration: float = 100.0
    trajectories: int = 1
    snapshot_interval: Optional[float] = 0.1
    burn_in: float = 0.0
    substep: float = 1e-3
    fock_guard: float = 1e-4
    out: Optional[str] = None
    preset: Optional[str] = None
    workers: Optional[int] = None
    omegas: Optional[list] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if self.seed is None:
            raise ConfigError("a master seed is required")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if isinstance(self.trajectories, bool) or int(self.trajectories) != self.trajectories or self.trajectories < 1:
            raise ConfigError(f"trajectory count must be an integer >= 1, got {self.trajectories!r}")
        for name in ("omega", "gamma", "duration", "burn_in", "substep", "fock_guard"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{name} must be a finite number")
        if self.gamma <= 0 or self.omega < 0:
            raise ConfigError("need gamma > 0 and omega >= 0")
        if self.duration <= 0 and self.scheme != "conditioned":
            raise ConfigError("duration must be positive")
        if self.substep <= 0 or self.fock_guard <= 0 or self.burn_in < 0:
            raise ConfigError("substep and fock_guard must be positive, burn_in non-negative")
        if self.snapshot_interval is not None and not self.snapshot_interval > 0:
            raise ConfigError("snapshot_interval must be positive")
        if self.hwhm is not None and not self.hwhm > 0:
            raise ConfigError("hwhm must be positive")
        if self.workers is not None and (int(self.workers) != self.workers or self.workers < 1):
            raise ConfigError("workers must be an integer >= 1")
        if self.scheme.startswith("spectral") or self.scheme == "conditioned":
            if self.omega <= 0:
                raise ConfigError(f"scheme {self.scheme} needs omega > 0")
            if int(self.n_max) != self.n_max or self.n_max < 1:
                raise ConfigError("n_max must be an integer >= 1")
            want = 2 if self.scheme == "spectral-2" else 1
            if self.detunings is not None and len(self.detunings) != want:
                raise ConfigError(f"scheme {self.scheme} takes {want} detuning(s)")
        if self.scheme == "two-state" and self.omega <= 0:
            raise ConfigError("two-state scheme needs omega > 0")
        if self.omegas is not None and any(not float(w) > 0 for w in self.omegas):
            raise ConfigError("scaling abscissae must be positive")

    @property
    def atom(self) -> AtomParams:
        return AtomParams(gamma=float(self.gamma), omega=float(self.omega))

    @property
    def filter_hwhm(self) -> float:
        if self.hwhm is not None:
            return float(self.hwhm)
        return optimal_linewidth(self.atom)

    @property
    def filters(self) -> list:
        if not (self.scheme.startswith("spectral") or self.scheme == "conditioned"):
            return []
        if self.detunings is not None:
            det = [float(d) for d in self.detunings]
        elif self.scheme == "spectral-2":
            det = [self.omega, -self.omega]
        elif self.scheme == "conditioned":
            det = [self.omega]
        else:
            det = [0.0]
        return [FilterConfig(self.filter_hwhm, d, int(self.n_max)) for d in det]

    def dt_max(self, omega: Optional[float] = None) -> float:
        scale = max(self.gamma, self.omega if omega is None else omega)
        return self.substep / scale

    def n_workers(self) -> int:
        return int(self.workers) if self.workers is not None else (os.cpu_count() or 1)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


PRESETS = {
    "fig2": dict(scheme="spectral-1", omega=50.0, hwhm=8.0, detunings=[0.0], n_max=3, duration=20.0,
                 trajectories=1, snapshot_interval=0.01, seed=2),
    "fig4": dict(scheme="spectral-2", omega=50.0, hwhm=8.0, n_max=3, duration=20.0,
                 trajectories=1, snapshot_interval=0.01, seed=4),
    "fig7": dict(scheme="orthogonal", omega=10.0, duration=14.985, trajectories=1,
                 snapshot_interval=0.015, substep=0.02, seed=7),
    "fig8": dict(scheme="orthogonal", omega=10.0, omegas=[5.0, 10.0, 20.0, 40.0, 80.0], duration=40.0,
                 burn_in=4.0, trajectories=200, snapshot_interval=0.05, substep=0.02, seed=8),
    "two-state-scaling": dict(scheme="two-state", omega=10.0, omegas=[2.0, 5.0, 10.0, 20.0, 50.0],
                              duration=100.0, burn_in=5.0, trajectories=50, snapshot_interval=0.1, seed=5),
    "spectral-scaling": dict(scheme="spectral-2", omega=100.0, omegas=[50.0, 100.0, 200.0, 400.0],
                             n_max=3, duration=400.0, burn_in=5.0, trajectories=100,
                             snapshot_interval=0.1, fock_guard=1e-3, seed=1),
}

_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def load_config_file(path) -> dict:
    """Read a YAML mapping of :class:`ExperimentConfig` keys."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return data


def make_config(preset: Optional[str] = None, path=None, **overrides) -> ExperimentConfig:
    """Preset, then file keys, then explicit overrides (``None`` values are ignored)."""
    merged = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        merged.update(PRESETS[preset])
        merged["preset"] = preset
    if path is not None:
        merged.update(load_config_file(path))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(merged) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("scheme", "omega"):
        if key not in merged:
            raise ConfigError(f"missing required key {key!r}")
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------- trajectory records


def _row_block(times, labels, rhos) -> dict:
    x = np.einsum("nij,ji->n", rhos, np.array([[0, 1], [1, 0]])).real
    y = np.einsum("nij,ji->n", rhos, np.array([[0, 1j], [-1j, 0]])).real
    z = (rhos[:, 1, 1] - rhos[:, 0, 0]).real
    pm = np.einsum("i,nij,j->n", MINUS.conj(), rhos, MINUS).real
    return {"time": np.asarray(times, float), "channel": list(labels), "x": x, "y": y, "z": z, "pm": pm}


def _merge_blocks(snap: dict, ev: dict) -> dict:
    # snapshots precede an event at the same time
    times = np.concatenate([snap["time"], ev["time"]])
    kind = np.concatenate([np.zeros(len(snap["time"])), np.ones(len(ev["time"]))])
    order = np.lexsort((kind, times))
    out = {"time": times[order]}
    labels = snap["channel"] + ev["channel"]
    out["channel"] = [labels[i] for i in order]
    for key in ("x", "y", "z", "pm"):
        out[key] = np.concatenate([snap[key], ev[key]])[order]
    return out


def _empty_block() -> dict:
    z = np.zeros(0)
    return {"time": z, "channel": [], "x": z, "y": z, "z": z, "pm": z}


@dataclass
class TrajectoryRecord:
    """Serializable result of one trajectory, keyed by ``index``."""

    index: int
    rows: dict
    counts: dict
    n_events: int
    dressed_error: Optional[float] = None
    tracking_error: Optional[float] = None
    window_agreement: Optional[list] = None
    sideband: tuple = (0, 0)


def _quantum_record(cfg: ExperimentConfig, index: int, tr, rule=None, initial_pred=0) -> TrajectoryRecord:
    snaps = reduced_atom(tr.snapshots, tr.dims) if len(tr.snapshot_times) else np.zeros((0, 2, 2))
    snap = _row_block(tr.snapshot_times, [SNAPSHOT] * len(tr.snapshot_times), snaps) if len(snaps) else _empty_block()
    if tr.event_states is not None and len(tr.event_times):
        ev = _row_block(tr.event_times, tr.event_labels, reduced_atom(tr.event_states, tr.dims))
    else:
        ev = _empty_block()
    keep = tr.snapshot_times >= cfg.burn_in
    derr = None
    if len(snaps) and keep.any():
        pp = np.einsum("i,nij,j->n", PLUS.conj(), snaps, PLUS).real
        derr = float(np.minimum(pp, snap["pm"])[keep].mean())
    rec = TrajectoryRecord(index, _merge_blocks(snap, ev), tr.label_counts(), len(tr.event_times), derr)
    if rule is not None and len(snaps) and keep.any():
        agree = tracking_agreement(tr, rule, initial=initial_pred)
        rec.tracking_error = float(1.0 - agree[keep].mean())
        rec.window_agreement = [float(w.mean()) for w in np.array_split(agree, 4) if len(w)]
        rec.sideband = sideband_alternation(tr.event_labels)
    return rec


def _classical_record(cfg: ExperimentConfig, index: int, tr, kets) -> TrajectoryRecord:
    rho = np.array([np.outer(k, k.conj()) for k in kets])
    grid = _grid(cfg)
    states = np.concatenate([[tr.initial_state], tr.states]).astype(int)
    at = states[np.searchsorted(tr.times, grid, side="right")] if len(grid) else np.zeros(0, int)
    snap = _row_block(grid, [SNAPSHOT] * len(grid), rho[at]) if len(grid) else _empty_block()
    ev = _row_block(tr.times, tr.labels, rho[tr.states]) if len(tr.times) else _empty_block()
    keep = grid >= cfg.burn_in
    derr = None
    if len(grid) and keep.any():
        pp = np.einsum("i,nij,j->n", PLUS.conj(), rho[at], PLUS).real
        derr = float(np.minimum(pp, snap["pm"])[keep].mean())
    counts = {}
    for lab in tr.labels:
        counts[lab] = counts.get(lab, 0) + 1
    return TrajectoryRecord(index, _merge_blocks(snap, ev), counts, len(tr.times), derr)


def _grid(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.snapshot_interval is None:
        return np.zeros(0)
    n = int(math.floor(cfg.duration / cfg.snapshot_interval + 1e-9))
    return np.arange(n + 1) * cfg.snapshot_interval


def _engine_config(cfg: ExperimentConfig) -> EngineConfig:
    return EngineConfig(
        dt_max=cfg.dt_max(),
        snapshot_interval=cfg.snapshot_interval,
        fock_guard=cfg.fock_guard,
    )


def _spectral_system(cfg: ExperimentConfig):
    f = cfg.filters
    if cfg.scheme == "spectral-1":
        return build_one_filter(cfg.atom, f[0])
    return build_two_filter(cfg.atom, f[0], f[1])


def _simulate_chunk(cfg_dict: dict, indices: list) -> list:
    """Simulate the trajectories ``indices``; runs inside a worker process."""
    cfg = ExperimentConfig(**cfg_dict)
    atom, seed = cfg.atom, cfg.seed
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        if cfg.scheme in ("tm", "dressed"):
            if cfg.scheme == "tm":
                kets = tm_diagonalize(stationary_state(atom)).states
                sim = simulate_tm
            else:
                kets, sim = (PLUS, MINUS), simulate_dressed
            return [
                _classical_record(cfg, k, sim(atom, cfg.duration, np.random.SeedSequence(seed, spawn_key=(k,))), kets)
                for k in indices
            ]
        ecfg = _engine_config(cfg)
        if cfg.scheme == "orthogonal":
            rngs = [trajectory_rng(seed, k) for k in indices]
            init = np.broadcast_to(PLUS, (len(indices), 2))
            trs = sample_ensemble_state_dependent(
                init, build_orthogonal_set(atom), cfg.duration, rngs, ecfg, seeds=[(seed, k) for k in indices]
            )
            return [_quantum_record(cfg, k, tr) for k, tr in zip(indices, trs)]
        out = []
        if cfg.scheme == "direct":
            opset = build_direct_detection(atom)
            for k in indices:
                tr = sample_trajectory(GROUND, opset, cfg.duration, (seed, k), ecfg, rng=trajectory_rng(seed, k))
                out.append(_quantum_record(cfg, k, tr))
        elif cfg.scheme == "two-state":
            for k in indices:
                tr = simulate_two_state(atom, cfg.duration, (seed, k), config=ecfg, rng=trajectory_rng(seed, k))
                out.append(_quantum_record(cfg, k, tr))
        else:
            system = _spectral_system(cfg)
            if cfg.scheme == "spectral-2":
                from .filters import slow_states

                start, rule = slow_states(system)[0].vector(normalize=True), SIDEBAND_RULE
            else:
                start, rule = system.vacuum(PLUS), CENTRAL_FILTER_RULE
            for k in indices:
                tr = sample_trajectory(start, system.opset, cfg.duration, (seed, k), ecfg, rng=trajectory_rng(seed, k))
                out.append(_quantum_record(cfg, k, tr, rule=rule, initial_pred=0))
        return out


def _chunks(n: int, parts: int) -> list:
    parts = max(1, min(parts, n))
    return [list(c) for c in np.array_split(np.arange(n), parts) if len(c)]


def simulate_records(cfg: ExperimentConfig) -> list:
    """All trajectory records of ``cfg`` in index order."""
    if cfg.scheme not in TRAJECTORY_SCHEMES:
        raise ConfigError(f"scheme {cfg.scheme} does not produce trajectories")
    chunks = [[int(i) for i in c] for c in _chunks(int(cfg.trajectories), cfg.n_workers())]
    payload = cfg.to_dict()
    try:
        if cfg.n_workers() == 1 or len(chunks) == 1:
            parts = [_simulate_chunk(payload, c) for c in chunks]
        else:
            with ProcessPoolExecutor(max_workers=cfg.n_workers()) as pool:
                parts = list(pool.map(_simulate_chunk, [payload] * len(chunks), chunks))
    except (TruncationError, NormUnderflowError, linalg.LinalgError) as exc:
        raise NumericalAbort(f"{type(exc).__name__}: {exc}") from exc
    recs = [r for p in parts for r in p]
    return sorted(recs, key=lambda r: r.index)


# ---------------------------------------------------------------- summary


def _mean_se(vals) -> dict:
    v = np.array([x for x in vals if x is not None], dtype=float)
    if v.size == 0:
        return {"mean": None, "stderr": None, "n": 0}
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None
    return {"mean": float(v.mean()), "stderr": se, "n": int(v.size)}


def summarize(cfg: ExperimentConfig, records: list) -> dict:
    """JSON-ready run summary (without the timestamp)."""
    counts = {}
    for r in records:
        for lab, c in r.counts.items():
            counts[lab] = counts.get(lab, 0) + c
    exposure = cfg.duration * len(records)
    stats = {"dressed_error": _mean_se(r.dressed_error for r in records)}
    if cfg.scheme == "two-state":
        stats["dressed_error_analytic"] = two_state_error_analytic(cfg.atom)
    if cfg.scheme.startswith("spectral"):
        stats["tracking_error"] = _mean_se(r.tracking_error for r in records)
        wins = [r.window_agreement for r in records if r.window_agreement]
        if wins:
            width = min(len(w) for w in wins)
            stats["window_agreement"] = [float(np.mean([w[i] for w in wins])) for i in range(width)]
    if cfg.scheme == "spectral-2":
        viol = sum(r.sideband[0] for r in records)
        pairs = sum(r.sideband[1] for r in records)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            budget = error_budget(cfg.atom, cfg.filter_hwhm)
        stats["alternation"] = {
            "violations": int(viol),
            "pairs": int(pairs),
            "violation_fraction": viol / pairs if pairs else None,
            "epsilon_forbidden": budget.forbidden,
        }
    return {
        "scheme": cfg.scheme,
        "preset": cfg.preset,
        "config": cfg.to_dict(),
        "code_version": code_version(),
        "csv_schema": {"version": CSV_SCHEMA_VERSION, "columns": list(CSV_COLUMNS)},
        "trajectories": len(records),
        "events": int(sum(r.n_events for r in records)),
        "channel_counts": dict(sorted(counts.items())),
        "channel_rates": {k: v / exposure for k, v in sorted(counts.items())},
        "statistics": stats,
    }


def _schema() -> dict:
    return json.loads(resources.files("qjumps").joinpath("summary.schema.json").read_text())


def validate_summary(summary: dict):
    jsonschema.validate(summary, _schema())


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(path, rows: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(rows["time"])):
            w.writerow([_fmt(rows["time"][i]), rows["channel"][i], _fmt(rows["x"][i]), _fmt(rows["y"][i]),
                        _fmt(rows["z"][i]), _fmt(rows["pm"][i])])


def read_trajectory_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_summary(path, summary: dict):
    summary = dict(summary, timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat())
    validate_summary(summary)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


@dataclass
class RunResult:
    summary: dict
    records: list = field(repr=False)
    summary_path: Optional[Path] = None
    csv_paths: list = field(default_factory=list)


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Simulate ``cfg`` and, when ``cfg.out`` is set, write CSVs and the summary.

    The ``conditioned`` scheme writes the conditioned atomic state instead of
    trajectories (see :func:`conditioned_report`).
    """
    if cfg.scheme == "conditioned":
        rep = conditioned_report(cfg)
        result = RunResult(rep, [])
        if cfg.out is not None:
            out = Path(cfg.out)
            out.mkdir(parents=True, exist_ok=True)
            result.summary_path = out / "conditioned.json"
            with open(result.summary_path, "w") as fh:
                json.dump(rep, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return result
    records = simulate_records(cfg)
    summary = summarize(cfg, records)
    result = RunResult(summary, records)
    if cfg.out is not None:
        out = Path(cfg.out)
        tdir = out / "trajectories"
        tdir.mkdir(parents=True, exist_ok=True)
        width = max(5, len(str(len(records) - 1)))
        for r in records:
            p = tdir / f"traj_{r.index:0{width}d}.csv"
            write_trajectory_csv(p, r.rows)
            result.csv_paths.append(p)
        result.summary_path = out / "summary.json"
        result.summary = write_summary(result.summary_path, summary)
    else:
        validate_summary(dict(summary, timestamp=""))
    return result


# ---------------------------------------------------------------- conditioned state


def conditioned_report(cfg: ExperimentConfig) -> dict:
    """Conditioned atomic state after a passed-photon detection, with the full-model check."""
    filt = cfg.filters[0] if cfg.scheme == "conditioned" else FilterConfig(cfg.filter_hwhm, cfg.omega, cfg.n_max)
    try:
        res = conditioned_state(cfg.atom, filt)
        full = conditioned_state_full(cfg.atom, filt)
    except linalg.LinalgError as exc:
        raise NumericalAbort(f"{type(exc).__name__}: {exc}") from exc
    chain = res.rho2.as_array().astype(float)
    dev = float(np.max(np.abs(chain - full.as_array().astype(float))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        from .filters import epsilon_app_perturbative

        pert = epsilon_app_perturbative(cfg.atom, filt.hwhm)
    norm = res.normalized
    return {
        "omega": cfg.omega,
        "gamma": cfg.gamma,
        "hwhm": filt.hwhm,
        "detuning": filt.detuning,
        "n_max": filt.n_max,
        "weight": float(res.rho2.p),
        "bloch": {"x": float(norm.x), "y": float(norm.y), "z": float(norm.z)},
        "epsilon_app": res.epsilon_app,
        "epsilon_app_perturbative": pert,
        "full_model_max_deviation": dev,
        "regime": res.regime,
        "code_version": code_version(),
    }


# ---------------------------------------------------------------- scaling


@dataclass
class ScalingReport:
    """Weighted least-squares fit ``log eps = log c + p log(u)`` with ``u = scale * gamma / Omega``.

    ``exponent`` is ``d log eps / d log Omega = -p``.
    """

    scheme: str
    abscissae: np.ndarray
    errors: np.ndarray
    stderrs: np.ndarray
    exponent: float
    exponent_stderr: float
    coefficient: float
    coefficient_stderr: float
    covariance: np.ndarray
    residuals: np.ndarray
    chi2_dof: float
    scale: float = 1.0
    nominal_exponent: Optional[float] = None
    fixed_exponent_coefficient: Optional[float] = None
    fixed_exponent_coefficient_stderr: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def fit_power_law(omegas, errors, stderrs, scale: float = 1.0, gamma: float = 1.0,
                  nominal_exponent: Optional[float] = None, scheme: str = "") -> ScalingReport:
    """Weighted log-log regression of errors against ``Omega``."""
    w_ = np.asarray(omegas, float)
    e = np.asarray(errors, float)
    se = np.asarray(stderrs, float)
    if w_.size < 4:
        raise ValueError("a scaling fit needs at least 4 abscissae")
    if np.any(e <= 0) or np.any(se <= 0):
        raise ValueError("errors and standard errors must be positive for a log-log fit")
    u = np.log(scale * gamma / w_)
    y = np.log(e)
    sig = se / e
    a = np.column_stack([np.ones_like(u), u]) / sig[:, None]
    b = y / sig
    coef, *_ = np.linalg.lstsq(a, b, rcond=None)
    cov = np.linalg.inv(a.T @ a)
    resid = (y - coef[0] - coef[1] * u) / sig
    dof = w_.size - 2
    chi2 = float(resid @ resid / dof)
    c = math.exp(coef[0])
    rep = ScalingReport(
        scheme=scheme,
        abscissae=w_ / gamma,
        errors=e,
        stderrs=se,
        exponent=float(-coef[1]),
        exponent_stderr=float(math.sqrt(cov[1, 1])),
        coefficient=c,
        coefficient_stderr=float(c * math.sqrt(cov[0, 0])),
        covariance=cov,
        residuals=resid,
        chi2_dof=chi2,
        scale=scale,
        nominal_exponent=nominal_exponent,
    )
    if nominal_exponent is not None:
        # weighted mean of log(eps / u^p) at the nominal slope
        logc = y + nominal_exponent * u
        wt = 1 / sig**2
        m = float(np.sum(wt * logc) / np.sum(wt))
        rep.fixed_exponent_coefficient = math.exp(m)
        rep.fixed_exponent_coefficient_stderr = math.exp(m) / math.sqrt(float(np.sum(wt)))
    return rep


def _point(cfg: ExperimentConfig, omega: float, index: int) -> tuple:
    atom = AtomParams(cfg.gamma, omega)
    seed = [int(cfg.seed), index]
    n, T = int(cfg.trajectories), cfg.duration
    if cfg.scheme == "orthogonal":
        est = orthogonal_error(atom, n, T, cfg.burn_in, seed, dt_max=cfg.dt_max(omega),
                               snapshot_interval=cfg.snapshot_interval or 0.05)
        return est.mean, est.stderr, {}
    if cfg.scheme == "two-state":
        ecfg = EngineConfig(snapshot_interval=cfg.snapshot_interval, store_event_states=False)
        trs = simulate_two_state_ensemble(atom, T, n, seed, config=ecfg)
        est = ensemble_dressed_error(trs, cfg.burn_in)
        exact = two_state_error_analytic(atom)
        # the snapshot error is deterministic between jumps; floor the stderr for the fit
        return est.mean, max(est.stderr, 1e-12 * exact), {"analytic": exact}
    hwhm = cfg.hwhm if cfg.hwhm is not None else optimal_linewidth(atom)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        est = spectral_tracking_error(atom, hwhm, n, T, cfg.burn_in, seed, n_max=int(cfg.n_max),
                                      snapshot_interval=cfg.snapshot_interval or 0.1, fock_guard=cfg.fock_guard)
        budget = error_budget(atom, hwhm).total
    return est.mean, est.stderr, {"hwhm": hwhm, "budget": budget, "violation_fraction": est.violation_fraction}


NOMINAL = {"orthogonal": (-2.0, 0.5), "two-state": (-2.0, 1.0), "spectral-2": (-2.0 / 3.0, 1.0)}


def run_scaling(cfg: ExperimentConfig, omegas=None) -> ScalingReport:
    """Monte Carlo error at each ``Omega`` and the log-log fit.

    Orthogonal jumping is fitted as ``c (gamma / 2 Omega)^p``, the other
    schemes as ``c (gamma / Omega)^p``.  The spectral scheme uses
    ``2 Gamma = Omega^(2/3) gamma^(1/3)`` unless ``hwhm`` is set.
    """
    omegas = omegas if omegas is not None else cfg.omegas
    if cfg.scheme not in SCALING_SCHEMES:
        raise ConfigError(f"scaling runs support {', '.join(SCALING_SCHEMES)}, not {cfg.scheme}")
    if omegas is None or len(omegas) < 4:
        raise ConfigError("a scaling run needs at least 4 values of omega")
    omegas = [float(w) for w in omegas]
    pts = []
    try:
        for i, w in enumerate(omegas):
            pts.append(_point(cfg, w, i))
    except (TruncationError, NormUnderflowError, linalg.LinalgError) as exc:
        raise NumericalAbort(f"{type(exc).__name__}: {exc}") from exc
    nominal, scale = NOMINAL[cfg.scheme]
    rep = fit_power_law(omegas, [p[0] for p in pts], [p[1] for p in pts], scale=scale, gamma=cfg.gamma,
                        nominal_exponent=nominal, scheme=cfg.scheme)
    rep.extra = {"points": [p[2] for p in pts], "config": cfg.to_dict(), "code_version": code_version()}
    if cfg.scheme == "two-state":
        exact = np.array([p[2]["analytic"] for p in pts])
        rep.extra["deviation_in_stderr"] = ((rep.errors - exact) / rep.stderrs).tolist()
    return rep


def write_scaling(path, rep: ScalingReport):
    with open(path, "w") as fh:
        json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- Bloch locus


LOCUS_COLUMNS = ("family", "branch", "omega_over_gamma", "phi", "cos_theta", "marker")


def projection(ket) -> tuple:
    """Equal-area coordinates ``(phi, cos theta)`` of a pure state."""
    x, y, z = bloch_of_state(np.asarray(ket, dtype=complex))
    return float(math.atan2(y, x)), float(z)


def _ratio_grid(lo: float, n: int) -> np.ndarray:
    # dense near the lower end, then geometric out to strong driving
    near = lo + np.geomspace(1e-6, 1.0, n // 2)
    far = np.geomspace(lo + 1.0, 1e4, n - n // 2)
    return np.concatenate([near, far])


LIMIT_RATIO = 1e8


def bloch_locus_rows(n: int = 200) -> list:
    """Rows ``(family, branch, Omega/gamma, phi, cos theta, marker)``."""
    rows = []

    def fam(name, lo, states_at, include_lo=False):
        grid = _ratio_grid(lo, n)
        if include_lo:
            grid = np.concatenate([[lo], grid])
        for r in list(grid) + [LIMIT_RATIO]:
            for branch, ket in states_at(float(r)).items():
                phi, ct = projection(ket)
                mark = "limit" if r == LIMIT_RATIO else ""
                rows.append((name, branch, float(r), phi, ct, mark))
        for branch, ket in states_at(2.0).items():
            rows.append((name, branch, 2.0) + projection(ket) + ("omega=2gamma",))

    def hl(r):
        b = atomic_basis(AtomParams(1.0, r))
        return {"h": b.h, "l": b.l}

    def psi_s(r):
        st = two_state_states(AtomParams(1.0, r))
        return {"+": st[+1]["stable"], "-": st[-1]["stable"]}

    def theta(r):
        tp, tm = orthogonal_fixed_points(AtomParams(1.0, r))
        return {"+": tp, "-": tm}

    fam("hl", 0.5, hl)
    fam("psi_s", 0.0, psi_s, include_lo=True)
    fam("theta", 1.0, theta)
    for branch, ket in (("+", PLUS), ("-", MINUS)):
        rows.append(("dressed", branch, math.inf) + projection(ket) + ("dressed",))
    r2 = 1 / math.sqrt(2)
    for branch, ket in (("phi1", np.array([r2, -1j * r2])), ("phi2", np.array([r2, 1j * r2]))):
        rows.append(("tm", branch, math.inf) + projection(ket) + ("tm",))
    return rows


def emit_bloch_locus(path=None, n: int = 200) -> list:
    """Locus rows for the Bloch-sphere figure, optionally written as CSV."""
    rows = bloch_locus_rows(n)
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOCUS_COLUMNS)
            for fam_, br, r, phi, ct, mk in rows:
                w.writerow([fam_, br, _fmt(r), _fmt(phi), _fmt(ct), mk])
    return rows
