from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from kirchhoff_well.cli import main
from kirchhoff_well.config import DEFAULTS, parse_config
from kirchhoff_well.discretization import Mesh
from kirchhoff_well.errors import ConfigError
from kirchhoff_well.evolution import CSV_COLUMNS
from kirchhoff_well.experiment import (
    EXIT_CONFIG,
    EXIT_OK,
    OUTPUT_ENV,
    initial_field,
    read_field_csv,
    run_experiment,
    run_sweep,
    write_field_csv,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(autouse=True)
def _no_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def read_summary(path) -> dict[str, str]:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["key", "value"]
    return {k: v for k, v in rows[1:]}


class TestParse:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg.mesh == Mesh.interval(255)
        assert (cfg.params.a, cfg.params.b, cfg.params.q, cfg.params.n) == (1.0, 1.0, 5.0, 1)
        assert cfg.time.dt == DEFAULTS["time.dt"][1]
        assert set(cfg.echo()) == set(DEFAULTS)

    def test_comments_and_values(self):
        cfg = parse_config("# c\nmesh.dimension = 2\nmesh.nodes = 15, 31  # inline\ntime.adaptive = yes\n")
        assert cfg.mesh == Mesh.rectangle((15, 31)) and cfg.params.n == 2
        assert cfg.time.adaptive is True

    def test_q_below_three(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("model.q = 2.5")
        assert any("q" in e and "3" in e for e in exc.value.errors)

    def test_negative_dt(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("time.dt = -1")
        assert any(e.startswith("line 1:") and "time.dt" in e for e in exc.value.errors)

    def test_all_errors_reported(self):
        text = "mesh.nodes = 2\nmodel.q = 1\nbogus = 3\ntime.scheme = rk4\nmodel.a = x\nnot a pair\n"
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        errs = exc.value.errors
        for needle in ("line 1:", "line 2:", "unknown key 'bogus'", "line 4:", "line 5:", "line 6:"):
            assert any(needle in e for e in errs), needle

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("model.a = 1\nmodel.a = 2\n")

    def test_overrides_and_seed(self):
        cfg = parse_config("seed = 3\ninit.family = fourier-random", {"seed": 9})
        assert cfg.seed == 9 and cfg.init.seed == 9
        assert parse_config("seed = 3\ninit.seed = 4").init.seed == 4


class TestFields:
    @pytest.mark.parametrize("family", ["sine-mode", "gaussian-bump", "fourier-random"])
    def test_families(self, family):
        cfg = parse_config(f"mesh.nodes = 63\ninit.family = {family}\ninit.amplitude = 2")
        u = initial_field(cfg)
        assert u.mesh == cfg.mesh and np.max(np.abs(u.values)) > 0

    def test_file_roundtrip(self, tmp_path):
        cfg = parse_config("mesh.dimension = 2\nmesh.nodes = 7, 5\ninit.family = gaussian-bump\ninit.amplitude = 1")
        u = initial_field(cfg)
        path = tmp_path / "u.csv"
        write_field_csv(u, path)
        assert path.read_text().splitlines()[0] == "x,y,value"
        np.testing.assert_array_equal(read_field_csv(path, cfg.mesh).values, u.values)
        cfg2 = parse_config(f"mesh.dimension = 2\nmesh.nodes = 7, 5\ninit.family = file\ninit.file = {path}\ninit.amplitude = 1")
        np.testing.assert_array_equal(initial_field(cfg2).values, u.values)


class TestRunExperiment:
    def test_zero_amplitude(self, tmp_path):
        cfg = parse_config(f"mesh.nodes = 63\ninit.amplitude = 0\nanalysis.omega_limit = true\noutput.dir = {tmp_path}")
        rep = run_experiment(cfg)
        assert rep.outcome == "GlobalDecay" and rep.classification == "Zero"
        assert all(v == "PASS" for k, v in rep.checks.items() if k.startswith("decay_"))
        assert len([k for k in rep.checks if k.startswith("decay_")]) == 4
        assert rep.exit_code == EXIT_OK

    def test_decay_demo(self, tmp_path):
        cfg = parse_config((CONFIGS / "decay.cfg").read_text(), {"output.dir": str(tmp_path)})
        rep = run_experiment(cfg)
        for name in ("L2", "H1", "Lq1", "H"):
            assert rep.checks[f"decay_{name}"] == "PASS"
        assert rep.checks["energy_identity"] == "PASS"
        assert rep.classification == "InsideW" and rep.d_reference == "d_est"
        # every check is PASS, FAIL or an explicit SKIPPED(reason)
        assert all(v in ("PASS", "FAIL") or (v.startswith("SKIPPED(") and len(v) > 9) for v in rep.checks.values())
        report = json.loads((tmp_path / "report.json").read_text())
        summary = read_summary(tmp_path / "summary.csv")
        for key, value in report["values"].items():
            assert float(summary[key]) == value, key
        header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
        assert header.split(",") == list(CSV_COLUMNS)

    def test_blowup_demo(self, tmp_path):
        cfg = parse_config((CONFIGS / "blowup.cfg").read_text(), {"output.dir": str(tmp_path)})
        rep = run_experiment(cfg)
        assert rep.outcome == "BlowUp" and rep.classification == "InsideV"
        assert rep.values["J0"] < rep.d_est
        assert rep.checks["energy_identity"].startswith("SKIPPED(")
        assert json.loads((tmp_path / "report.json").read_text())["numerical_blowup"] is True


class TestSweep:
    def test_empty(self, tmp_path):
        rows = run_sweep(f"output.dir = {tmp_path}", "init.amplitude", [])
        assert rows == []
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines == ["value,outcome,blowup_time,J0,I0,classification,exit_code,error"]

    def test_amplitude_threshold_monotone(self, tmp_path):
        text = (CONFIGS / "sweep.cfg").read_text()
        values = ["1e-3", "3", "6", "9.5", "12", "20"]
        rows = run_sweep(text, "init.amplitude", values, workers=3, overrides={"output.dir": str(tmp_path)})
        outcomes = [r["outcome"] for r in rows]
        blown = [o == "BlowUp" for o in outcomes]
        assert blown[0] is False and blown[-1] is True
        assert blown == sorted(blown), outcomes  # a single global -> blow-up transition
        assert all((tmp_path / f"run_{k:03d}" / "trajectory.csv").exists() for k in range(len(values)))

    def test_failure_recorded_per_row(self, tmp_path):
        rows = run_sweep(f"mesh.nodes = 31\ntime.t_end = 1e-3\noutput.dir = {tmp_path}", "model.q", ["5", "2"])
        assert rows[0]["exit_code"] == EXIT_OK and rows[0]["outcome"]
        assert rows[1]["exit_code"] == EXIT_CONFIG and "q" in rows[1]["error"]

    def test_unknown_axis(self, tmp_path):
        with pytest.raises(ConfigError):
            run_sweep(f"output.dir = {tmp_path}", "model.zz", ["1"])


class TestCli:
    def _cfg(self, tmp_path, extra=""):
        path = tmp_path / "c.cfg"
        path.write_text(f"mesh.nodes = 63\ntime.t_end = 0.05\ntime.dt = 1e-3\noutput.dir = {tmp_path / 'out'}\n{extra}")
        return path

    def test_config_error_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("model.q = 2\nfoo = 1\n")
        assert main(["simulate", str(path)]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "foo" in err and "model.q" in err

    def test_missing_file(self, tmp_path):
        assert main(["simulate", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG

    def test_env_output_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
        assert main(["simulate", str(self._cfg(tmp_path))]) == EXIT_OK
        assert (tmp_path / "env" / "trajectory.csv").exists()
        assert not (tmp_path / "out").exists()

    def test_seed_flag(self, tmp_path):
        path = self._cfg(tmp_path, "init.family = fourier-random\n")
        main(["simulate", str(path), "--seed", "1"])
        first = (tmp_path / "out" / "trajectory.csv").read_bytes()
        main(["simulate", str(path), "--seed", "2"])
        assert (tmp_path / "out" / "trajectory.csv").read_bytes() != first
        main(["simulate", str(path), "--seed", "1"])
        assert (tmp_path / "out" / "trajectory.csv").read_bytes() == first

    def test_subcommands(self, tmp_path, capsys):
        path = self._cfg(tmp_path, "analysis.starts = 2\nanalysis.bounds_samples = 20\nanalysis.gn_samples = 50\n")
        assert main(["ground-state", str(path)]) == EXIT_OK
        assert main(["well-depth", str(path)]) == EXIT_OK
        assert main(["classify", str(path)]) == EXIT_OK
        assert "InsideW" in capsys.readouterr().out
        assert main(["classify", str(path), "--d", "1e-12"]) == EXIT_OK
        assert "EnergyAboveD" in capsys.readouterr().out
        assert main(["bounds", str(path)]) == EXIT_OK
        out = tmp_path / "out"
        for name in ("ground_state.csv", "ground_state.json", "well_depth.csv", "bounds.csv", "bounds.json"):
            assert (out / name).exists(), name
        gs = json.loads((out / "ground_state.json").read_text())
        assert gs["residual"] <= 1e-6 and gs["I_prime_pairing"] < 0

    def test_sweep_command(self, tmp_path):
        path = self._cfg(tmp_path)
        assert main(["sweep", str(path), "--axis", "init.amplitude", "--values", "1e-3,2e-3"]) == EXIT_OK
        assert main(["sweep", str(path), "--axis", "init.amplitude", "--values", "1e-3,abc"]) == EXIT_CONFIG
