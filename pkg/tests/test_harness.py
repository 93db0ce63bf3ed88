import csv
import json
import math

import numpy as np
import pytest

from qjumps.cli import main
from qjumps.harness import (
    CSV_COLUMNS,
    LIMIT_RATIO,
    ConfigError,
    NumericalAbort,
    bloch_locus_rows,
    emit_bloch_locus,
    fit_power_law,
    make_config,
    read_trajectory_csv,
    run_experiment,
    run_scaling,
    validate_summary,
)


def _strip(path):
    d = json.loads(path.read_text())
    d.pop("timestamp")
    return d


class TestConfig:
    def test_zero_trajectories(self):
        with pytest.raises(ConfigError):
            make_config(scheme="tm", omega=5.0, seed=1, trajectories=0)

    def test_seed_is_mandatory(self):
        with pytest.raises(ConfigError):
            make_config(scheme="tm", omega=5.0)

    def test_unknown_key_and_scheme(self):
        with pytest.raises(ConfigError):
            make_config(scheme="tm", omega=5.0, seed=1, colour="red")
        with pytest.raises(ConfigError):
            make_config(scheme="bogus", omega=5.0, seed=1)
        with pytest.raises(ConfigError):
            make_config(preset="fig99")

    def test_file_then_overrides(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("scheme: dressed\nomega: 7\nseed: 3\nduration: 5\n")
        cfg = make_config(path=p, duration=9.0)
        assert (cfg.scheme, cfg.omega, cfg.seed, cfg.duration) == ("dressed", 7, 3, 9.0)
        p.write_text("scheme: [unclosed\n")
        with pytest.raises(ConfigError):
            make_config(path=p)

    def test_spectral_detuning_count(self):
        with pytest.raises(ConfigError):
            make_config(scheme="spectral-2", omega=50.0, seed=1, detunings=[50.0])
        cfg = make_config(scheme="spectral-2", omega=50.0, seed=1)
        assert [f.detuning for f in cfg.filters] == [50.0, -50.0]


def test_rerun_byte_identical(tmp_path):
    runs = []
    for k in range(2):
        cfg = make_config(scheme="dressed", omega=10.0, seed=11, trajectories=3, duration=20.0,
                          out=str(tmp_path / f"r{k}"), workers=1)
        runs.append(run_experiment(cfg))
    a, b = runs
    for pa, pb in zip(a.csv_paths, b.csv_paths):
        assert pa.read_bytes() == pb.read_bytes()
    sa, sb = _strip(a.summary_path), _strip(b.summary_path)
    for s in (sa, sb):
        s["config"].pop("out")
    assert sa == sb


def test_worker_count_does_not_change_results():
    base = dict(scheme="spectral-2", omega=20.0, hwhm=4.0, seed=5, trajectories=4, duration=5.0)
    r1 = run_experiment(make_config(workers=1, **base))
    r2 = run_experiment(make_config(workers=2, **base))
    assert [r.index for r in r2.records] == [0, 1, 2, 3]
    for x, y in zip(r1.records, r2.records):
        assert x.rows["channel"] == y.rows["channel"]
        assert np.array_equal(x.rows["time"], y.rows["time"])
        assert np.array_equal(x.rows["pm"], y.rows["pm"])


def test_csv_header_and_schema(tmp_path):
    res = run_experiment(make_config(scheme="two-state", omega=10.0, seed=1, trajectories=2, duration=10.0,
                                     out=str(tmp_path)))
    with open(res.csv_paths[0], newline="") as fh:
        assert tuple(next(csv.reader(fh))) == CSV_COLUMNS
    s = json.loads(res.summary_path.read_text())
    validate_summary(s)
    assert s["csv_schema"]["columns"] == list(CSV_COLUMNS)
    assert set(s["channel_rates"]) == {"homodyne"}
    assert "dressed_error_analytic" in s["statistics"]


def test_fig4_preset():
    res = run_experiment(make_config(preset="fig4"))
    labels = set(res.summary["channel_counts"])
    assert labels <= {"a", "b", "1"} and {"a", "b"} <= labels
    alt = res.summary["statistics"]["alternation"]
    assert alt["pairs"] > 0 and 0 <= alt["violation_fraction"] <= 1


def test_fig7_preset(tmp_path):
    res = run_experiment(make_config(preset="fig7", out=str(tmp_path)))
    rows = [r for r in read_trajectory_csv(res.csv_paths[0]) if r["channel"] == "snapshot"]
    assert len(rows) == 1000
    t = np.array([float(r["time"]) for r in rows])
    assert np.allclose(np.diff(t), 0.015)
    assert res.summary["config"]["omega"] == 10.0


def test_conditioned_run(tmp_path):
    res = run_experiment(make_config(scheme="conditioned", omega=50.0, hwhm=8.0, seed=0, out=str(tmp_path)))
    rep = json.loads(res.summary_path.read_text())
    assert rep["full_model_max_deviation"] < 1e-6
    assert 0 < rep["epsilon_app"] < 0.1


class TestLocus:
    rows = bloch_locus_rows(60)

    def _markers(self, fam):
        return {r[1]: r for r in self.rows if r[0] == fam}

    def test_limits_reach_dressed_markers(self):
        marks = self._markers("dressed")
        for fam in ("hl", "psi_s", "theta"):
            lim = [r for r in self.rows if r[0] == fam and r[5] == "limit"]
            assert len(lim) == 2 and lim[0][2] == LIMIT_RATIO
            for r in lim:
                d = min(
                    math.hypot(math.remainder(r[3] - m[3], 2 * math.pi), r[4] - m[4]) for m in marks.values()
                )
                assert d < 1e-6

    def test_omega_two_gamma_rows(self):
        for fam in ("hl", "psi_s", "theta"):
            assert len([r for r in self.rows if r[0] == fam and r[5] == "omega=2gamma"]) == 2

    def test_tm_markers_on_equator(self):
        tm = self._markers("tm")
        assert {round(r[3], 12) for r in tm.values()} == {round(math.pi / 2, 12), round(-math.pi / 2, 12)}
        assert all(abs(r[4]) < 1e-15 for r in tm.values())

    def test_ranges(self):
        assert min(r[2] for r in self.rows if r[0] == "psi_s") == 0.0
        assert min(r[2] for r in self.rows if r[0] == "hl") >= 0.5
        assert min(r[2] for r in self.rows if r[0] == "theta") >= 1.0

    def test_csv(self, tmp_path):
        p = tmp_path / "locus.csv"
        rows = emit_bloch_locus(p, 20)
        assert len(p.read_text().splitlines()) == len(rows) + 1


class TestPowerLaw:
    def test_recovers_synthetic_law(self):
        w = np.array([5.0, 10.0, 20.0, 40.0, 80.0])
        e = 3.0 * (1 / (2 * w)) ** 2
        rep = fit_power_law(w, e, 0.01 * e, scale=0.5, nominal_exponent=-2.0)
        assert rep.exponent == pytest.approx(-2.0, abs=1e-10)
        assert rep.coefficient == pytest.approx(3.0, rel=1e-10)
        assert rep.fixed_exponent_coefficient == pytest.approx(3.0, rel=1e-10)
        assert rep.chi2_dof == pytest.approx(0.0, abs=1e-12)

    def test_noisy_chi2(self):
        rng = np.random.default_rng(3)
        w = np.geomspace(10, 1000, 12)
        e = 0.75 * w ** (-2 / 3)
        se = 0.05 * e
        rep = fit_power_law(w, e + rng.normal(size=w.size) * se, se)
        assert abs(rep.exponent + 2 / 3) < 4 * rep.exponent_stderr
        assert 0.2 < rep.chi2_dof < 3
        assert rep.covariance.shape == (2, 2)

    def test_needs_four_points(self):
        with pytest.raises(ValueError):
            fit_power_law([1, 2, 3], [1, 2, 3], [1, 1, 1])
        with pytest.raises(ConfigError):
            run_scaling(make_config(scheme="two-state", omega=10.0, seed=1), omegas=[2, 5, 10])


class TestCli:
    def test_run(self, tmp_path, capsys):
        rc = main(["run", "--scheme", "tm", "--omega", "10", "--seed", "1", "--trajectories", "2",
                   "--duration", "10", "--workers", "1", "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "summary.json").exists()
        assert len(list((tmp_path / "trajectories").glob("traj_*.csv"))) == 2

    def test_config_errors(self, tmp_path):
        assert main(["run", "--scheme", "tm", "--omega", "10", "--seed", "1", "--trajectories", "0"]) == 2
        assert main(["run", "--scheme", "tm", "--omega", "10"]) == 2
        with pytest.raises(SystemExit) as exc:
            main(["run", "--trajectories", "many"])
        assert exc.value.code == 2

    def test_numerical_abort(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("scheme: spectral-2\nomega: 50\nhwhm: 8\nn_max: 1\nfock_guard: 1.0e-30\nseed: 1\n")
        assert main(["run", "--config", str(p), "--duration", "5", "--workers", "1"]) == 3
        with pytest.raises(NumericalAbort):
            run_experiment(make_config(path=p, duration=5.0, workers=1))

    def test_locus_and_conditioned(self, tmp_path, capsys):
        assert main(["locus", "--out", str(tmp_path / "l.csv"), "--points", "10"]) == 0
        assert main(["conditioned", "--omega", "50", "--hwhm", "8", "--out", str(tmp_path / "c.json")]) == 0
        assert json.loads((tmp_path / "c.json").read_text())["weight"] > 0

    def test_scaling(self, tmp_path):
        out = tmp_path / "s.json"
        rc = main(["scaling", "--preset", "two-state-scaling", "--trajectories", "4", "--duration", "20",
                   "--burn-in", "2", "--out", str(out)])
        assert rc == 0
        rep = json.loads(out.read_text())
        assert "chi2_dof" in rep and "exponent" in rep
