"""Config loading, artifact serialization and the command line front end."""

import json

import numpy as np
import pytest

from spinoc.cli import main, run
from spinoc.config import DEFAULTS, config_fingerprint, load_config
from spinoc.errors import ConfigurationError
from spinoc.storage import (read_state_binary, sha256_file, write_csv,
                            write_iteration_log, write_json,
                            write_state_binary, write_state_csv)
from spinoc.wigner import PhaseGrid, coherent_wigner, moments


class TestLoadConfig:
    def test_minimal_config_fills_defaults(self):
        rc = load_config({})
        assert rc.grid.n_x == DEFAULTS["grid"]["n_x"]
        assert rc.hbar == DEFAULTS["hbar"]
        assert rc.oc.horizon == DEFAULTS["oc"]["horizon"]
        assert rc.fields.n_controls == 1
        assert rc.control_signal().values.shape == (rc.oc.n_intervals + 1, 1)

    def test_fingerprint_tracks_physics_not_output(self):
        base = load_config({})
        assert load_config({"output": "elsewhere"}).fingerprint == \
            base.fingerprint
        assert load_config({"hbar": 0.3}).fingerprint != base.fingerprint
        assert config_fingerprint(base.effective) == base.fingerprint

    def test_all_violations_reported_at_once(self):
        with pytest.raises(ConfigurationError) as err:
            load_config({"grid": {"n_x": 100}, "hbar": -1.0,
                         "oc": {"horizon": 0.0}})
        msgs = err.value.violations
        assert len(msgs) == 3
        assert any("grid.n_x = 100" in m and "power of two" in m
                   for m in msgs)
        assert any("hbar" in m for m in msgs)
        assert any("oc.horizon" in m for m in msgs)

    def test_oversized_envelope_names_box_and_suggests_length(self):
        with pytest.raises(ConfigurationError) as err:
            load_config({"sweep": {"hbar_list": [0.25]},
                         "initial": {"sigma": 6.0}})
        text = str(err.value)
        assert "envelope exceeds box" in text
        assert "grid.lx" in text and "26." in text

    def test_explicit_dt_checked_against_cfl(self):
        with pytest.raises(ConfigurationError, match="CFL"):
            load_config({"evolution": {"dt": 1.0}})
        assert load_config({"evolution": {"dt": 1e-3}}).dt == 1e-3

    def test_unknown_keys_rejected_with_path(self):
        with pytest.raises(ConfigurationError, match="grid.nx"):
            load_config({"grid": {"nx": 64}})

    def test_parse_error_carries_position(self, tmp_path):
        bad = tmp_path / "broken.json"
        bad.write_text('{"hbar": 0.2,,}')
        with pytest.raises(ConfigurationError, match="line 1"):
            load_config(bad)

    def test_uniform_mode_needs_uniform_fields(self):
        with pytest.raises(ConfigurationError, match="uniform"):
            load_config({
                "evolution": {"mode": "uniform"},
                "fields": {"rashba": {"kind": "gaussian",
                                      "value": [0.0, 0.3, 0.2],
                                      "width": 1.5}}})

    def test_control_values_shape_checked(self):
        with pytest.raises(ConfigurationError, match="control.values"):
            load_config({"control": {"values": [[0.1], [0.2]]}})
        n = DEFAULTS["oc"]["n_intervals"]
        rc = load_config({"control": {"values": [[0.1]] * (n + 1)}})
        assert rc.control_signal().values[0, 0] == pytest.approx(0.1)

    def test_sweep_ladder_must_decrease(self):
        with pytest.raises(ConfigurationError, match="decrease"):
            load_config({"sweep": {"hbar_list": [0.1, 0.2]}})
        with pytest.raises(ConfigurationError, match="grid_list"):
            load_config({"sweep": {"hbar_list": [0.4, 0.2],
                                   "grid_list": [{"n_x": 64}]}})

    def test_off_line_initial_rejected_for_phase_space(self):
        rc = load_config({"initial": {"x": [0.0, 0.1, 0.0]}})
        rc.classical_state()  # the classical lane is three dimensional
        with pytest.raises(ConfigurationError, match="first axis"):
            rc.wigner_state()

    def test_wigner_state_matches_config(self):
        rc = load_config({})
        st = rc.wigner_state()
        m = moments(st)
        assert m.mass == pytest.approx(1.0, abs=1e-10)
        assert m.mean_x == pytest.approx(rc.initial_x[0], abs=1e-10)
        assert m.var_x == pytest.approx(rc.hbar * rc.sigma**2 / 2,
                                        rel=1e-8)


class TestStorage:
    def test_snapshot_roundtrip_is_exact(self, tmp_path):
        grid = PhaseGrid(n_x=16, n_p=8, x0=-4.0, lx=8.0, p0=-3.0, lp=6.0)
        st = coherent_wigner(grid, hbar=0.31, xbar=0.2, pbar=-0.4,
                             sigma=1.1, dbar=(0.6, 0.0, 0.8))
        st.time = 0.75
        path = write_state_binary(tmp_path / "s.spnw", st)
        back = read_state_binary(path)
        assert back.grid == grid
        assert back.hbar == st.hbar and back.time == 0.75
        assert np.array_equal(back.data, st.data)

    def test_snapshot_rejects_foreign_bytes(self, tmp_path):
        path = tmp_path / "junk.spnw"
        path.write_bytes(b"NOPE" + bytes(100))
        with pytest.raises(ConfigurationError, match="magic"):
            read_state_binary(path)
        path.write_bytes(b"")
        with pytest.raises(ConfigurationError, match="too short"):
            read_state_binary(path)

    def test_csv_keeps_seventeen_digits(self, tmp_path):
        value = 0.1234567890123456789
        path = write_csv(tmp_path / "t.csv", ["a"], [[value]])
        text = path.read_text().splitlines()
        assert text[0] == "a"
        assert float(text[1]) == value  # no precision lost

    def test_state_csv_guards_large_grids(self, tmp_path):
        grid = PhaseGrid(n_x=256, n_p=256, x0=-6.0, lx=12.0, p0=-6.0,
                         lp=12.0)
        st = coherent_wigner(grid, 0.25, 0.0, 0.0, 1.0, (0.0, 0.0, 1.0))
        with pytest.raises(ConfigurationError, match="binary snapshot"):
            write_state_csv(tmp_path / "big.csv", st)

    def test_json_spells_nonfinite_as_null(self, tmp_path):
        path = write_json(tmp_path / "s.json", {"a": float("nan"),
                                                "b": np.float64(2.0)})
        loaded = json.loads(path.read_text())
        assert loaded == {"a": None, "b": 2.0}

    def test_iteration_log_embeds_fingerprint(self, tmp_path):
        rows = [{"iteration": 0, "J": 1.0, "goal": 0.5, "backtracks": 0,
                 "grad_sup": None, "step": None}]
        path = write_iteration_log(tmp_path / "it.json", rows, "abc123")
        log = json.loads(path.read_text())
        assert log["config_fingerprint"] == "abc123"
        assert log["iterations"] == rows


class TestCli:
    def test_simulate_classical_twice_is_byte_identical(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"oc": {"n_intervals": 20}}))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["simulate-classical", "--config", str(cfg),
                         "--out", str(out)]) == 0
        for name in ("trajectory.csv", "control.csv", "summary.json",
                     "manifest.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_manifest_checksums_verify(self, tmp_path):
        assert main(["simulate-classical", "--out",
                     str(tmp_path / "run")]) == 0
        manifest = json.loads((tmp_path / "run" / "manifest.json")
                              .read_text())
        assert manifest["config_fingerprint"]
        assert len(manifest["artifacts"]) == 3
        for entry in manifest["artifacts"]:
            assert sha256_file(tmp_path / "run" / entry["path"]) == \
                entry["sha256"]

    def test_optimize_classical_artifacts(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "oc": {"n_intervals": 20},
            "optimizer": {"max_iterations": 10,
                          "gradient_tolerance": 1e-3}}))
        assert main(["optimize-classical", "--config", str(cfg), "--out",
                     str(tmp_path / "run")]) == 0
        summary = json.loads((tmp_path / "run" / "summary.json")
                             .read_text())
        assert summary["subcommand"] == "optimize-classical"
        assert summary["objective"] <= summary["goal"] + summary["cost"] \
            + 1e-12
        log = json.loads((tmp_path / "run" / "iterations.json").read_text())
        assert log["config_fingerprint"] == summary["config_fingerprint"]
        js = [row["J"] for row in log["iterations"]]
        assert all(b <= a + 1e-12 for a, b in zip(js, js[1:]))

    def test_simulate_wigner_mass_and_snapshot(self, tmp_path):
        assert main(["simulate-wigner", "--out", str(tmp_path / "w")]) == 0
        diag = np.genfromtxt(tmp_path / "w" / "diagnostics.csv",
                             delimiter=",", names=True)
        assert abs(diag["mass"][-1] - diag["mass"][0]) < 1e-8
        final = read_state_binary(tmp_path / "w" / "final_state.spnw")
        summary = json.loads((tmp_path / "w" / "summary.json").read_text())
        assert summary["final_moments"]["mass"] == \
            pytest.approx(moments(final).mass)

    @pytest.mark.slow
    def test_optimize_wigner_descends(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "grid": {"n_x": 32, "n_p": 32},
            "oc": {"horizon": 0.3, "n_intervals": 10},
            "hbar": 0.4,
            "sweep": {"cutoff_radius": 3.5},
            "optimizer": {"max_iterations": 4,
                          "gradient_tolerance": 1e-3}}))
        with pytest.warns(UserWarning):
            code = main(["optimize-wigner", "--config", str(cfg), "--out",
                         str(tmp_path / "run")])
        assert code == 0
        log = json.loads((tmp_path / "run" / "iterations.json").read_text())
        js = [row["J"] for row in log["iterations"]]
        assert js[-1] <= js[0] + 1e-12

    @pytest.mark.slow
    @pytest.mark.filterwarnings("ignore:cutoff support radius")
    def test_limit_sweep_writes_one_row_per_hbar(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "oc": {"n_intervals": 16},
            "sweep": {"optimize": False}}))
        assert main(["limit-sweep", "--config", str(cfg), "--hbar-list",
                     "0.4,0.2", "--out", str(tmp_path / "s")]) == 0
        rows = np.genfromtxt(tmp_path / "s" / "sweep.csv", delimiter=",",
                             names=True)
        assert rows.shape == (2,)
        np.testing.assert_allclose(rows["hbar"], [0.4, 0.2])
        assert (tmp_path / "s" / "control_hbar_0.4.csv").exists()
        assert (tmp_path / "s" / "classical_control.csv").exists()

    def test_validate_reports_all_passed(self, tmp_path, capsys):
        assert main(["validate", "--out", str(tmp_path / "v"),
                     "--seed", "7"]) == 0
        report = json.loads((tmp_path / "v" / "validation.json")
                            .read_text())
        assert report["all_passed"] is True
        assert len(report["checks"]) >= 6
        assert "checks passed" in capsys.readouterr().out

    def test_config_rejection_exits_two_with_all_messages(self, tmp_path,
                                                          capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"grid": {"n_x": 100}, "hbar": -2.0}))
        assert main(["simulate-wigner", "--config", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "grid.n_x = 100" in err and "hbar" in err

    def test_runtime_error_names_module_and_fingerprint(self, tmp_path,
                                                        capsys):
        cfg = tmp_path / "off.json"
        cfg.write_text(json.dumps({"initial": {"x": [-0.5, 0.2, 0.0]}}))
        assert main(["simulate-wigner", "--config", str(cfg), "--out",
                     str(tmp_path / "o")]) == 1
        err = capsys.readouterr().err
        assert "[spinoc.config]" in err and "(config " in err

    def test_missing_config_file_exits_two(self, capsys):
        assert main(["simulate-classical", "--config",
                     "/nonexistent/run.json"]) == 2
        assert "does not exist" in capsys.readouterr().err

    def test_seed_override_changes_fingerprint(self, tmp_path):
        assert main(["validate", "--out", str(tmp_path / "v1")]) == 0
        assert main(["validate", "--out", str(tmp_path / "v2"),
                     "--seed", "99"]) == 0
        fp = [json.loads((tmp_path / v / "validation.json").read_text())
              ["config_fingerprint"] for v in ("v1", "v2")]
        assert fp[0] != fp[1]

    def test_run_rejects_unknown_subcommand(self, tmp_path):
        with pytest.raises(ConfigurationError, match="subcommand"):
            run("explode", load_config({}), tmp_path)
