import json

import numpy as np
import pytest

from vecadvect import cli, fields as fl, vaf


def _run(tmp_path, cfg, *extra):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    return cli.main(["run", "--config", str(p), "--out", str(out), *extra]), out


def test_so3_check_run(tmp_path):
    code, out = _run(tmp_path, {"kind": "so3-check", "grid": {"dim": 3, "n": 8}, "n_trials": 50})
    assert code == 0
    res = json.loads((out / "result.json").read_text())
    assert res["passed"] and res["checks"]["so3"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["version"] and man["config"]["kind"] == "so3-check"


def test_unknown_key_is_config_error(tmp_path, capsys):
    code, _ = _run(tmp_path, {"kind": "so3-check", "grid": {"dim": 3}, "bogus": 1})
    assert code == 2
    assert "bogus" in capsys.readouterr().err


def test_stochastic_kind_needs_seed(tmp_path):
    code, _ = _run(tmp_path, {"kind": "fk2d", "grid": {"dim": 2, "n": 16}})
    assert code == 2


def test_missing_config(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_seed_override_and_determinism(tmp_path):
    cfg = {"kind": "fk2d", "grid": {"dim": 2, "n": 8}, "T": 0.2, "s": 0.05, "dt": 0.025, "n_paths": 30,
           "seed": 1, "pde_dt": 1e-2, "plots": False}
    code, out = _run(tmp_path, cfg, "--seed", "7")
    assert code in (0, 4)
    first = (out / "result.json").read_bytes()
    assert json.loads((out / "manifest.json").read_text())["config"]["seed"] == 7
    code, out = _run(tmp_path, cfg, "--seed", "7")
    assert (out / "result.json").read_bytes() == first


def test_solve_writes_plot_and_fields(tmp_path):
    cfg = {"kind": "solve", "grid": {"dim": 2, "n": 16}, "T": 0.1, "dt": 0.01,
           "velocity": {"recipe": "taylor_green_2d"}, "save_fields": True}
    code, out = _run(tmp_path, cfg)
    assert code == 0
    assert (out / "energy.svg").exists() and (out / "energy.csv").exists()
    assert isinstance(vaf.read(out / "final.vaf"), fl.VectorField)


def test_guard_exit_code(tmp_path):
    cfg = {"kind": "solve", "grid": {"dim": 2, "n": 16}, "T": 0.1, "dt": 0.05,
           "velocity": {"recipe": "taylor_green_2d", "params": {"amplitude": 100.0}}}
    code, _ = _run(tmp_path, cfg)
    assert code == 3


def test_grid_mismatch_vaf(tmp_path, rng):
    vaf.write(tmp_path / "f.vaf", fl.random_solenoidal(fl.Grid.cube(2, 8), rng))
    cfg = {"kind": "solve", "grid": {"dim": 2, "n": 16}, "T": 0.1, "F0": {"vaf": str(tmp_path / "f.vaf")}}
    code, _ = _run(tmp_path, cfg)
    assert code == 2


def test_inspect(tmp_path, rng, capsys):
    f = fl.random_solenoidal(fl.Grid.cube(2, 8), rng)
    vaf.write(tmp_path / "f.vaf", f)
    assert cli.main(["inspect", str(tmp_path / "f.vaf")]) == 0
    text = capsys.readouterr().out
    assert "dim: 2" in text and "divergence norm" in text
    (tmp_path / "bad.vaf").write_bytes(b"junk")
    assert cli.main(["inspect", str(tmp_path / "bad.vaf")]) == 2


def test_convert_roundtrip(tmp_path, rng):
    f = fl.random_solenoidal(fl.Grid.cube(3, 8), rng)
    vaf.write(tmp_path / "a.vaf", f)
    assert cli.main(["convert", str(tmp_path / "a.vaf"), str(tmp_path / "a.npz")]) == 0
    assert cli.main(["convert", str(tmp_path / "a.npz"), str(tmp_path / "b.vaf")]) == 0
    assert (tmp_path / "a.vaf").read_bytes() == (tmp_path / "b.vaf").read_bytes()


def test_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("VECADVECT_OUT", str(tmp_path / "envout"))
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"kind": "so3-check", "grid": {"dim": 3}, "n_trials": 20}))
    assert cli.main(["run", "--config", str(p)]) == 0
    assert (tmp_path / "envout" / "result.json").exists()


def test_scaling_run(tmp_path):
    cfg = {"kind": "scaling", "grid": {"dim": 3, "n": 16}, "lambda": 0.5, "T": 0.05, "dt": 1e-3,
           "velocity": {"recipe": "abc_flow", "params": {"A": 0.5, "B": 0.5, "C": 0.5}}}
    code, out = _run(tmp_path, cfg)
    res = json.loads((out / "result.json").read_text())
    assert res["checks"]["roundtrip"]
    assert code == 0, res


@pytest.mark.parametrize("name", ["duality", "fk2d", "martingale", "fk_surface", "serrin", "smoke"])
def test_shipped_configs_validate(name):
    from pathlib import Path
    cfg = cli.load_config(Path(__file__).parents[1] / "configs" / f"{name}.json")
    cli.make_grid(cfg["grid"])
