import json
import subprocess
import sys

import pytest

from qjreplica import cli


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def read_json(path):
    return json.loads(path.read_text())


class TestConfig:
    def test_flag_overrides_file(self, tmp_path):
        cfgfile = tmp_path / "c.json"
        cfgfile.write_text(json.dumps({"command": "coefficients", "gamma": 0.5}))
        cfg = cli.parse_config(["--config", str(cfgfile), "--gamma", "1.5"])
        assert cfg["gamma"] == 1.5 and cfg["command"] == "coefficients"

    def test_file_overrides_defaults(self, tmp_path):
        cfgfile = tmp_path / "c.json"
        cfgfile.write_text(json.dumps({"command": "rgflow", "g0": 0.25}))
        cfg = cli.parse_config(["--config", str(cfgfile)])
        assert cfg["g0"] == 0.25 and cfg["R"] == cli.DEFAULTS["R"]

    def test_unknown_key_named(self, tmp_path, capsys):
        cfgfile = tmp_path / "c.json"
        cfgfile.write_text(json.dumps({"command": "rgflow", "gama": 0.5}))
        code, _, err = run(["--config", cfgfile], capsys)
        assert code == 2 and "gama" in err

    def test_malformed_json_writes_nothing(self, tmp_path, capsys):
        cfgfile = tmp_path / "c.json"
        cfgfile.write_text("{not json")
        code, _, _ = run(["--config", cfgfile, "--out", tmp_path / "run"], capsys)
        assert code == 2
        assert sorted(p.name for p in tmp_path.iterdir()) == ["c.json"]

    def test_missing_config_file(self, tmp_path, capsys):
        code, _, _ = run(["rgflow", "--config", tmp_path / "absent.json"], capsys)
        assert code == 3

    def test_bad_value(self, capsys):
        code, _, _ = run(["coefficients", "--gamma", "-1"], capsys)
        assert code == 2

    def test_missing_command(self, capsys):
        code, _, _ = run([], capsys)
        assert code == 2


class TestCommands:
    def test_classify_summary(self, capsys):
        code, out, err = run(["classify"], capsys)
        assert code == 0
        for line in ("u1: G=U(R)xU(R) H=U(R) manifold=SU(R) class=AIII",
                     "general: G=O(R)xO(R) H=O(R) manifold=SO(R) class=DIII",
                     "pairing: G=O(2R) H=U(R) manifold=SO(2R)/U(R) class=D"):
            assert line in err
        assert "## classify.json" in out

    def test_rgflow_weak_coupling(self, tmp_path, capsys):
        code, _, _ = run(["rgflow", "--R", "1", "--g0", "0.1", "--out", tmp_path / "f"], capsys)
        assert code == 0
        lines = [l for l in (tmp_path / "f_rgflow.csv").read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == "lnL,g"
        assert float(lines[-1].split(",")[1]) < 0.1

    def test_coefficients_numerical_error(self, capsys):
        code, _, err = run(["coefficients", "--gamma", "0"], capsys)
        assert code == 1 and "InfiniteCoefficientError" in err

    def test_lindblad_csv(self, tmp_path, capsys):
        code, _, _ = run(["lindblad", "--L", "4", "--t-final", "1", "--out", tmp_path / "m"], capsys)
        assert code == 0
        body = [l for l in (tmp_path / "m_moments.csv").read_text().splitlines() if not l.startswith("#")]
        assert body[0] == "t,i,j,ReC,ImC,ReF,ImF" and len(body) == 1 + 16

    def test_trajectory_outputs(self, tmp_path, capsys):
        code, _, _ = run(["trajectory", "--L", "6", "--t-final", "1", "--dt", "0.01", "--out", tmp_path / "t"], capsys)
        assert code == 0
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["t_density.csv", "t_entropy.csv", "t_jumps.jsonl"]

    def test_ensemble_json(self, tmp_path, capsys):
        code, _, _ = run(["ensemble", "--L", "4", "--t-final", "0.5", "--dt", "0.01", "--n-traj", "4",
                          "--format", "json", "--out", tmp_path / "e"], capsys)
        assert code == 0
        doc = read_json(tmp_path / "e_ensemble.json")
        assert doc["data"]["n_traj"] == 4
        assert doc["header"]["content_sha1"] == cli.content_hash(json.dumps(doc["data"], sort_keys=True).encode())

    def test_compare_breach(self, capsys):
        argv = ["compare", "--L", "4", "--t-final", "0.5", "--dt", "0.01", "--n-traj", "20", "--gamma", "1"]
        assert run(argv, capsys)[0] == 0
        code, _, err = run(argv + ["--compare-sigma", "1e-6"], capsys)
        assert code == 4 and "limit" in err

    def test_oracle(self, tmp_path, capsys):
        code, _, _ = run(["oracle", "--L", "2", "--R", "2", "--gamma", "1", "--t-final", "0.2", "--dt", "0.01",
                          "--n-traj", "200", "--out", tmp_path / "o"], capsys)
        assert code == 0
        doc = read_json(tmp_path / "o_oracle.json")["data"]
        assert doc["max_z"] < 5 and doc["replicated"]["shape"] == [16, 16]

    def test_unwritable_output(self, tmp_path, capsys):
        code, _, _ = run(["rgflow", "--out", tmp_path / "missing" / "f"], capsys)
        assert code == 3


class TestReproducibility:
    def test_byte_identical(self, tmp_path, capsys):
        argv = ["ensemble", "--L", "4", "--t-final", "0.5", "--dt", "0.01", "--n-traj", "3", "--master-seed", "9"]
        assert run(argv + ["--out", tmp_path / "a"], capsys)[0] == 0
        assert run(argv + ["--out", tmp_path / "b"], capsys)[0] == 0
        for suffix in ("density.csv", "entropy.csv", "ensemble.csv", "jumps.jsonl"):
            assert (tmp_path / f"a_{suffix}").read_bytes() == (tmp_path / f"b_{suffix}").read_bytes()

    def test_header(self, tmp_path, capsys):
        run(["rgflow", "--out", tmp_path / "f"], capsys)
        text = (tmp_path / "f_rgflow.csv").read_text()
        head = text.splitlines()[:4]
        assert head[0].startswith("# qjreplica ")
        assert head[2] == "# master_seed: 42"
        body = "\n".join(text.splitlines()[4:]) + "\n"
        assert head[3] == "# content_sha1: " + cli.content_hash(body.encode())


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qjreplica", "rgflow", "--steps", "4"], capture_output=True, text=True)
    assert proc.returncode == 0 and "lnL,g" in proc.stdout
