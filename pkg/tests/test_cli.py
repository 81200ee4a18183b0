import hashlib
import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from neckspec.cli import run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "dumbbell.json"
    shutil.copy(CONFIGS / "dumbbell.json", path)
    return path


def _small(tmp_path, **over):
    doc = json.loads((CONFIGS / "dumbbell.json").read_text())
    doc.update({"s_grid": [1e-2, 1e-3, 1e-4]}, **over)
    path = tmp_path / "small.json"
    path.write_text(json.dumps(doc))
    return path


def test_sweep_fit_graph(tmp_path, cfg, capsys):
    out = tmp_path / "sweep.csv"
    assert run(["sweep", "--config", str(cfg), "--out", str(out), "--jobs", "1"]) == 0
    assert out.read_text().startswith("s,lambda0,lambda1,")
    assert (tmp_path / "sweep.svg").exists()
    capsys.readouterr()

    assert run(["fit", "--in", str(out), "--k", "1"]) == 0
    fit = json.loads(capsys.readouterr().out)
    assert {"A", "B", "r2"} <= set(fit)

    assert run(["graph", "--config", str(cfg)]) == 0
    text = capsys.readouterr().out
    assert "0.0" in text and "0.7853981" in text


def test_byte_identical_artifacts(tmp_path):
    cfg = _small(tmp_path)
    outs = []
    for i in range(2):
        paths = [tmp_path / f"{name}{i}" for name in ("s.csv", "r.json", "p.json", "c.json")]
        assert run(["sweep", "--config", str(cfg), "--out", str(paths[0]),
                    "--report", str(paths[1]), "--jobs", "1"]) == 0
        assert run(["potential", "--config", str(cfg), "--out", str(paths[2])]) == 0
        assert run(["checks", "--out", str(paths[3])]) == 0
        outs.append([p.read_bytes() for p in paths])
    assert outs[0] == outs[1]


def test_manifest(tmp_path, cfg, capsys):
    man = tmp_path / "m.json"
    out = tmp_path / "mesh.json"
    off = tmp_path / "mesh.off"
    assert run(["mesh", "--config", str(cfg), "--s", "0.01", "--out", str(out),
                "--off", str(off), "--seed", "7", "--manifest", str(man)]) == 0
    doc = json.loads(man.read_text())
    assert doc["command"] == "mesh"
    assert doc["config_hash"] == hashlib.sha256(cfg.read_bytes()).hexdigest()
    assert doc["seed"] == 7
    assert doc["outputs"] == [str(off), str(out)]
    assert doc["wall_time"] >= 0
    assert '"manifest"' in capsys.readouterr().err
    report = json.loads(out.read_text())
    assert report["euler_characteristic"] == report["expected_euler_characteristic"] == -2


def test_spectrum_exports(tmp_path, cfg, capsys):
    prefix = str(tmp_path / "x_")
    tfdir = tmp_path / "tf"
    assert run(["spectrum", "--config", str(cfg), "--s", "1e-3", "--mtx-prefix", prefix,
                "--testfn-dir", str(tfdir), "--shape", "quintic"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["eigenvalues"][1] <= doc["minmax_bounds"][0]
    assert Path(prefix + "K.mtx").exists() and Path(prefix + "M.mtx").exists()
    assert sorted(p.name for p in tfdir.iterdir()) == ["testfn_A.csv", "testfn_B.csv"]


def test_flow(tmp_path, capsys):
    csv_path = tmp_path / "flow.csv"
    assert run(["flow", "--p", "1", "--s", "0.01", "--csv", str(csv_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["endpoint_re"][0] == pytest.approx(1.00005, abs=1e-7)
    assert csv_path.read_text().startswith("eta,")


def test_unknown_subcommand(capsys):
    assert run(["bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"vertices": [}')
    assert run(["graph", "--config", str(bad)]) == 2
    assert "byte offset 14" in capsys.readouterr().err
    assert run(["flow", "--s", "0.5"]) == 2
    assert run(["graph", "--config", str(tmp_path / "missing.json")]) == 2
    unknown = _small(tmp_path, colour="red")
    assert run(["graph", "--config", str(unknown)]) == 2
    assert run(["graph", "--config", str(unknown), "--lenient"]) == 0


def test_nonconvergence_exit_code(tmp_path, capsys):
    cfg = _small(tmp_path, tolerances={"eig_residual": 1e-18})
    assert run(["spectrum", "--config", str(cfg), "--s", "1e-3"]) == 3
    assert "numerical" in capsys.readouterr().err


def test_console_script(cfg):
    exe = shutil.which("neckspec")
    cmd = [exe] if exe else [sys.executable, "-m", "neckspec.cli"]
    proc = subprocess.run(cmd + ["graph", "--config", str(cfg)], capture_output=True, text=True,
                          env={"NECKSPEC_LOG": "DEBUG", "PATH": "/usr/bin:/usr/local/bin"})
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["eigenvalues"][1] == pytest.approx(0.7853981633974483)
