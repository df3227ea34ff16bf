import json

import numpy as np
import pytest
import yaml

from lrcurrent.cli import main
from lrcurrent.config import ConfigParseError, RunConfig

FAST = ["--set", "L=3", "--set", "margin=6", "--set", "s_grid.n=21", "--workers", "1"]


def test_config_roundtrip(tmp_path):
    cfg = RunConfig(d=2, L=3, w=[0.6, 0.8],
                    field={"shape": "polynomial", "T": 0.3, "amplitude": [1.0, 2.0],
                           "shift": -0.1, "nodes": 16},
                    disorder={"onsite": "rademacher", "edge": "disc", "seed": 5},
                    tolerances={"quad_tol": 1e-10})
    for fmt in ("yaml", "json"):
        again = RunConfig.loads(cfg.dumps(fmt))
        assert again == cfg
        assert RunConfig.loads(again.dumps(fmt)) == again
    path = tmp_path / "c.yaml"
    path.write_text(cfg.dumps())
    assert RunConfig.load(path) == cfg


def test_config_errors():
    with pytest.raises(ConfigParseError):
        RunConfig.loads("bogus_key: 1")
    with pytest.raises(ConfigParseError):
        RunConfig.loads("[1, 2")
    with pytest.raises(ConfigParseError):
        RunConfig().with_overrides(["novalue"])
    with pytest.raises(ValueError):
        RunConfig(beta=0.0)
    with pytest.raises(ValueError):
        RunConfig(d=2)                      # w and amplitude still 1-dimensional
    cfg = RunConfig().with_overrides(["field.T=0.25", "disorder.seed=3", "lam=0.5"])
    assert cfg.field["T"] == 0.25 and cfg.disorder["seed"] == 3 and cfg.lam == 0.5


def test_generating_zero_field(tmp_path):
    out = tmp_path / "o"
    assert main(["generating", "--out", str(out), "--set", "field.amplitude=[0.0]"] + FAST) == 0
    data = np.genfromtxt(out / "generating.csv", delimiter=",", names=True)
    assert data.dtype.names == ("s", "J", "dJ", "d2J", "d3J")
    assert np.all(data["J"] == 0)
    man = json.loads((out / "generating_manifest.json").read_text())
    assert set(man["outputs"]) == {"generating.csv"}
    assert not list(out.glob(".*tmp"))


def test_oracle_subcommand(tmp_path, capsys):
    assert main(["oracle-test", "--out", str(tmp_path), "--set", "oracle.draws=20"]) == 0
    text = capsys.readouterr().out
    assert "log_moment" in text
    worst = json.loads((tmp_path / "oracle.json").read_text())["max_deviation"]
    assert max(worst.values()) < 1e-9


def test_oracle_failure_exit(tmp_path):
    code = main(["oracle-test", "--out", str(tmp_path), "--set", "oracle.draws=3",
                 "--tolerance", "oracle_tol=1e-30"])
    assert code == 5


@pytest.mark.parametrize("cmd", ["generating", "rate", "fluct", "info"])
def test_rerun_from_manifest_is_byte_identical(tmp_path, cmd):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main([cmd, "--out", str(first), "--seed", "11"] + FAST) == 0
    manifest = first / f"{cmd}_manifest.json"
    assert main([cmd, "--out", str(second), "--config", str(manifest), "--workers", "1"]) == 0
    outputs = json.loads(manifest.read_text())["outputs"]
    assert outputs
    for name in outputs:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_rate_outputs(tmp_path):
    assert main(["rate", "--out", str(tmp_path)] + FAST) == 0
    header = (tmp_path / "rate.csv").read_text().splitlines()[0]
    assert header == "x,I,flag_boundary"
    fit = json.loads((tmp_path / "rate_fit.json").read_text())
    assert not fit["degenerate"] and len(fit["relative_gap"]) == 3


def test_ensemble_and_workers(tmp_path):
    args = ["ensemble", "--set", "L_schedule=[2,3]", "--set", "margin=4",
            "--set", "ensemble.n_samples=3", "--set", "ensemble.quantities=[J1,F]"]
    assert main(args + ["--out", str(tmp_path / "w1"), "--workers", "1"]) == 0
    assert main(args + ["--out", str(tmp_path / "w2"), "--workers", "2"]) == 0
    a = (tmp_path / "w1" / "ensemble.csv").read_bytes()
    assert a == (tmp_path / "w2" / "ensemble.csv").read_bytes()
    assert a.splitlines()[0] == b"sample_index,seed,L,quantity,value"
    assert len(a.splitlines()) == 1 + 2 * 3 * 2


def test_floor_subcommand(tmp_path):
    args = ["floor", "--out", str(tmp_path), "--set", "field.shape=constant",
            "--set", "field.T=0.1", "--set", "L_schedule=[3]", "--set", "margin=6",
            "--set", "ensemble.n_samples=4", "--workers", "1"]
    assert main(args) == 0
    rep = json.loads((tmp_path / "floor.json").read_text())
    assert rep["passed"] and rep["floor"] > 0


def test_exit_codes(tmp_path, monkeypatch):
    with pytest.raises(SystemExit) as exc:
        main(["unknown-subcommand"])
    assert exc.value.code == 2
    assert main(["info", "--set", "nokey=1", "--out", str(tmp_path)]) == 2
    assert main(["info", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["info", "--tolerance", "bogus=1", "--out", str(tmp_path)]) == 2
    assert main(["info", "--set", "beta=-1", "--out", str(tmp_path)]) == 3
    assert main(["info", "--set", "L=40", "--set", "d=3", "--set", "w=[1,0,0]",
                 "--set", "field.amplitude=[1,0,0]", "--out", str(tmp_path)]) == 3
    assert main(["floor", "--set", "theta=0.2", "--out", str(tmp_path)]) == 3
    assert main(["generating", "--tolerance", "quad_tol=0", "--tolerance", "max_nodes=32",
                 "--out", str(tmp_path)] + FAST) == 4


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("LRCURRENT_OUT", str(tmp_path / "env"))
    assert main(["info"] + FAST) == 0
    assert (tmp_path / "env" / "info.json").exists()


def test_yaml_config_file(tmp_path):
    cfg = {"L": 3, "margin": 6, "field": {"shape": "polynomial"}, "s_grid": {"n": 11}}
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert main(["generating", "--config", str(path), "--out", str(tmp_path / "o"),
                 "--workers", "1"]) == 0
    rows = (tmp_path / "o" / "generating.csv").read_text().splitlines()
    assert len(rows) == 12
    # floats are written with 17 significant digits
    assert any(len(v.lstrip("-").replace(".", "").lstrip("0")) >= 15
               for v in rows[1].split(","))
