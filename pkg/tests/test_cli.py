"""End-to-end runs of the command line driver, in process via main(argv)."""

import json
import os

import numpy as np
import pytest

from spikesde import cli


def run(tmp_path, *argv):
    return cli.main([*argv, "--output-dir", str(tmp_path)])


class TestResolveConfig:
    def test_defaults(self):
        cfg = cli.resolve_config("twostate", None, {}, None, None)
        assert cfg.params["gamma"] == 400.0
        assert cfg.seed == 12345
        assert cfg.output_dir == "."

    def test_file_then_flags(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("gamma = 50\nseed = 9\n")
        cfg = cli.resolve_config("twostate", str(f), {"gamma": "75"},
                                 None, None)
        # flags beat the file, the file beats defaults
        assert cfg.params["gamma"] == 75.0
        assert cfg.seed == 9

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUTPUT_DIR, str(tmp_path))
        cfg = cli.resolve_config("twostate", None, {}, None, None)
        assert cfg.output_dir == str(tmp_path)

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.ENV_OUTPUT_DIR, "/nowhere")
        cfg = cli.resolve_config("twostate", None, {}, None, str(tmp_path))
        assert cfg.output_dir == str(tmp_path)

    def test_unknown_key(self):
        with pytest.raises(cli.ConfigError, match="bogus"):
            cli.resolve_config("twostate", None, {"bogus": "1"}, None, None)

    def test_bad_value(self):
        with pytest.raises(cli.ConfigError, match="gamma"):
            cli.resolve_config("twostate", None, {"gamma": "-3"}, None, None)

    def test_mode_mismatch(self, tmp_path):
        f = tmp_path / "c.cfg"
        f.write_text("mode = belavkin\n")
        with pytest.raises(cli.ConfigError, match="mode"):
            cli.resolve_config("twostate", str(f), {}, None, None)


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, capsys):
        code = run(tmp_path, "twostate", "--gamma", "-3")
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_gammas_is_2(self, tmp_path):
        assert run(tmp_path, "coupled-sweep", "--gammas", "10,oops") == 2

    def test_bad_workers_is_2(self, tmp_path):
        assert cli.main(["twostate", "--workers", "0",
                         "--output-dir", str(tmp_path)]) == 2

    def test_missing_input_file_is_2(self, tmp_path, capsys):
        code = run(tmp_path, "hausdorff-sweep",
                   "--paths", str(tmp_path / "none.csv"),
                   "--limit-graph", str(tmp_path / "none2.csv"))
        assert code == 2
        assert "file not found" in capsys.readouterr().err

    def test_positivity_failure_is_1(self, tmp_path, capsys):
        # n=2 at the default seed walks out of the cone within 50 steps
        code = run(tmp_path, "belavkin", "--T", "0.05", "--n", "2")
        assert code == 1
        assert "eigenvalue" in capsys.readouterr().err


class TestRuns:
    def test_twostate_artifacts(self, tmp_path):
        assert run(tmp_path, "twostate", "--T", "0.01", "--gamma", "50",
                   "--stride", "1") == 0
        path = tmp_path / "twostate_path.csv"
        assert path.exists()
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.all((data[:, 1] >= 0) & (data[:, 1] <= 1))
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["mode"] == "twostate"
        assert "twostate_path.csv" in manifest["files"]

    def test_twostate_zero_horizon(self, tmp_path):
        assert run(tmp_path, "twostate", "--T", "0") == 0
        lines = (tmp_path / "twostate_path.csv").read_text().splitlines()
        assert len(lines) == 2   # header plus the initial point

    def test_belavkin_artifacts(self, tmp_path):
        assert run(tmp_path, "belavkin", "--T", "0.05", "--n", "2",
                   "--dt", "1e-4") == 0
        data = np.loadtxt(tmp_path / "belavkin_trajectory.csv",
                          delimiter=",", skiprows=1)
        # trace of the reconstructed state stays at one
        tr = data[:, 1] + data[:, 7]
        assert np.max(np.abs(tr - 1.0)) < 1e-9

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            d.mkdir()
            assert cli.main(["limit-sample", "--H", "10",
                             "--output-dir", str(d)]) == 0
        for fn in sorted(os.listdir(a)):
            assert (a / fn).read_bytes() == (b / fn).read_bytes(), fn

    def test_limit_sample_first_spikes(self, tmp_path):
        assert run(tmp_path, "limit-sample", "--H", "5",
                   "--n-first", "100") == 0
        data = np.loadtxt(tmp_path / "first_spikes.csv",
                          delimiter=",", skiprows=1)
        assert data.shape == (100, 2)

    def test_coupled_sweep_and_hausdorff_rerun(self, tmp_path):
        assert run(tmp_path, "coupled-sweep", "--gammas", "100",
                   "--L", "2", "--dt-eff", "1e-4", "--delta", "5e-3") == 0
        hd = np.loadtxt(tmp_path / "hausdorff.csv", delimiter=",",
                        skiprows=1, ndmin=2)
        assert hd.shape == (1, 2)
        # feeding the sweep's own outputs back in reproduces the distance
        out2 = tmp_path / "again"
        out2.mkdir()
        assert cli.main(["hausdorff-sweep",
                         "--paths", str(tmp_path / "coupled_gamma100.csv"),
                         "--limit-graph", str(tmp_path / "limit_graph.csv"),
                         "--delta", "5e-3",
                         "--output-dir", str(out2)]) == 0
        hd2 = np.loadtxt(out2 / "hausdorff.csv", delimiter=",",
                         skiprows=1, ndmin=2)
        assert hd2[0, 1] == pytest.approx(hd[0, 1], rel=1e-12)

    def test_validate_quick_subset(self, tmp_path):
        assert run(tmp_path, "validate", "--profile", "quick",
                   "--criteria", "2") == 0
        doc = json.loads((tmp_path / "validation.json").read_text())
        assert doc["passed"] is True
        assert doc["criteria"][0]["index"] == 2
        assert doc["criteria"][0]["passed"] is True

    def test_config_file_run(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("mode = twostate\nT = 0.01\ngamma = 30\nseed = 3\n")
        assert cli.main(["twostate", "--config", str(f),
                         "--output-dir", str(tmp_path)]) == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 3
        assert manifest["config"]["gamma"] == 30.0
