"""Command-line interface: configs, artifacts, determinism, exit codes."""

import csv
import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from pointnls import cli, specfun


BASE_TOML = """\
[datum]
lam = 1.0
q0 = 1.0

[datum.regular]
kind = "gaussian"
amplitude = 1.0
width = 1.0

[params]
sigma = 1.0
beta0 = 1.0

[grid]
t_max = 0.2
kind = "adaptive"

[outputs]
samples = 9
"""


@pytest.fixture
def runner():
    return CliRunner()


def _read_csv(text):
    rows = list(csv.DictReader(text.splitlines()))
    assert rows, "empty CSV"
    return rows


class TestKernelTable:
    def test_table_matches_specfun(self, runner):
        res = runner.invoke(cli.main, [
            "kernel-table", "--function", "N",
            "--tmin", "1e-6", "--tmax", "1.0", "--points", "16"])
        assert res.exit_code == 0, res.output
        rows = _read_csv(res.output)
        ts = [float(r["t"]) for r in rows]
        assert len(ts) == 16 and ts == sorted(ts)
        for r in rows:
            assert float(r["value_re"]) == pytest.approx(
                specfun.volterra_N(float(r["t"])), rel=1e-12)
            assert float(r["value_im"]) == 0.0

    def test_q_uses_lam(self, runner):
        res = runner.invoke(cli.main, [
            "kernel-table", "--function", "Q", "--lam", "2.0",
            "--tmin", "0.1", "--tmax", "1.0", "--points", "4"])
        rows = _read_csv(res.output)
        v = complex(float(rows[-1]["value_re"]), float(rows[-1]["value_im"]))
        assert v == pytest.approx(specfun.q_series(2.0, 1.0), rel=1e-12)

    def test_out_file(self, runner, tmp_path):
        out = tmp_path / "table.csv"
        res = runner.invoke(cli.main, [
            "kernel-table", "--function", "I",
            "--tmin", "0.1", "--tmax", "1.0", "--points", "4",
            "--out", str(out)])
        assert res.exit_code == 0
        assert out.read_text().startswith("t,value_re,value_im\n")

    def test_bad_range_exits_2(self, runner):
        res = runner.invoke(cli.main, [
            "kernel-table", "--function", "I",
            "--tmin", "1.0", "--tmax", "0.1"])
        assert res.exit_code == cli.EXIT_CONFIG


class TestSolve:
    def test_artifacts_and_summary(self, runner, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(BASE_TOML)
        out = tmp_path / "out"
        res = runner.invoke(cli.main, [
            "solve", "--config", str(cfg), "--out-dir", str(out)])
        assert res.exit_code == 0, res.output
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "completed"
        assert summary["t_end"] == pytest.approx(0.2)
        assert sorted(summary["files"]) == ["solve.csv", "summary.json"]
        rows = _read_csv((out / "solve.csv").read_text())
        # samples is a target count; sample times snap to grid nodes.
        assert 5 <= len(rows) <= 9
        ts = [float(r["t"]) for r in rows]
        assert ts == sorted(ts) and ts[0] == 0.0
        assert float(rows[0]["abs_q"]) == pytest.approx(1.0)
        assert summary["sup_q"] >= max(float(r["abs_q"]) for r in rows) * 0.999
        assert abs(summary["mass_drift"]) < 1e-2
        assert summary["residual_sup"] < 1e-6

    def test_deterministic_reruns(self, runner, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(BASE_TOML)
        blobs = []
        for name in ("a", "b"):
            out = tmp_path / name
            res = runner.invoke(cli.main, [
                "solve", "--config", str(cfg), "--out-dir", str(out)])
            assert res.exit_code == 0, res.output
            blobs.append(((out / "solve.csv").read_bytes(),
                          (out / "summary.json").read_bytes()))
        assert blobs[0] == blobs[1]

    def test_json_config_equivalent(self, runner, tmp_path):
        cfg_json = tmp_path / "run.json"
        cfg_json.write_text(json.dumps({
            "datum": {"lam": 1.0, "q0": 1.0,
                      "regular": {"kind": "gaussian", "amplitude": 1.0,
                                  "width": 1.0}},
            "params": {"sigma": 1.0, "beta0": 1.0},
            "grid": {"t_max": 0.2, "kind": "adaptive"},
            "outputs": {"samples": 9},
        }))
        cfg_toml = tmp_path / "run.toml"
        cfg_toml.write_text(BASE_TOML)
        outs = []
        for cfg, name in ((cfg_toml, "t"), (cfg_json, "j")):
            out = tmp_path / name
            res = runner.invoke(cli.main, [
                "solve", "--config", str(cfg), "--out-dir", str(out)])
            assert res.exit_code == 0, res.output
            outs.append((out / "summary.json").read_bytes())
        assert outs[0] == outs[1]

    def test_env_var_out_dir(self, runner, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(BASE_TOML)
        out = tmp_path / "from_env"
        res = runner.invoke(cli.main, ["solve", "--config", str(cfg)],
                            env={cli.OUT_DIR_ENV: str(out)})
        assert res.exit_code == 0, res.output
        assert (out / "summary.json").exists()

    def test_unknown_key_exits_2(self, runner, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(BASE_TOML + "\n[solver]\nstep_sizes = 3.0\n")
        res = runner.invoke(cli.main, [
            "solve", "--config", str(cfg), "--out-dir", str(tmp_path / "o")])
        assert res.exit_code == cli.EXIT_CONFIG
        assert "step_sizes" in res.output

    def test_invalid_domain_exits_2(self, runner, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(BASE_TOML.replace("lam = 1.0", "lam = -2.0"))
        res = runner.invoke(cli.main, [
            "solve", "--config", str(cfg), "--out-dir", str(tmp_path / "o")])
        assert res.exit_code == cli.EXIT_CONFIG


class TestScan:
    def test_three_cells_statuses(self, runner, tmp_path):
        cfg = tmp_path / "scan.toml"
        cfg.write_text("""\
[datum]
lam = 1.0
q0 = 3.0

[params]
sigma = 1.0
beta0 = 1.0

[grid]
t_max = 0.2
kind = "adaptive"

[outputs]
samples = 5
""")
        out = tmp_path / "scan_out"
        res = runner.invoke(cli.main, [
            "scan", "--config", str(cfg), "--beta0-list", "-1,0,1",
            "--sigma-list", "1", "--jobs", "1", "--out-dir", str(out)])
        assert res.exit_code == 0, res.output
        manifest = json.loads((out / "scan_summary.json").read_text())
        status = {c["beta0"]: c["status"] for c in manifest["cells"]}
        assert status == {-1.0: "blowup", 0.0: "completed", 1.0: "completed"}
        blown = next(c for c in manifest["cells"] if c["beta0"] == -1.0)
        # T* is extrapolated beyond the resolved prefix: it sits inside the
        # reported window and well before the requested horizon.
        assert blown["T_star"] <= blown["blowup_window"][1]
        assert blown["T_star"] < 0.2
        for c in manifest["cells"]:
            cell = out / f"beta0_{c['beta0']:g}_sigma_{c['sigma']:g}"
            assert (cell / "solve.csv").exists()
            assert (cell / "summary.json").exists()

    def test_bad_list_exits_2(self, runner, tmp_path):
        cfg = tmp_path / "scan.toml"
        cfg.write_text(BASE_TOML)
        res = runner.invoke(cli.main, [
            "scan", "--config", str(cfg), "--beta0-list", "x,y",
            "--sigma-list", "1", "--out-dir", str(tmp_path / "o")])
        assert res.exit_code == cli.EXIT_CONFIG


class TestVerify:
    def test_single_suite_passes(self, runner):
        res = runner.invoke(cli.main, ["verify", "--suite", "conservation"])
        assert res.exit_code == 0, res.output
        assert "all checks passed" in res.output
        assert "FAIL" not in res.output
