import io
import json
import subprocess
import sys

import pytest

from collapselab.cli import config_keys, load_config, main, run
from collapselab.errors import ConfigError, EmptyGrid
from collapselab.experiments import Axis, SweepGrid
from collapselab.plotting import render_png, render_svg


def _cfg(tmp_path, body, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(body))
    return p


def _run(cfg, out, *over):
    so, se = io.StringIO(), io.StringIO()
    code = run(cfg, over, out=out, stdout=so, stderr=se)
    return code, so.getvalue(), se.getvalue()


TOY = {"command": "solve", "instance": {"d0": 2, "a0": {"diag": [1.0, 1.0]}, "c": {"diag": [0.0, 4.0]},
                                        "loss": {"family": "beta_infonce", "beta": 0.5}}}


def test_solve_table(tmp_path):
    code, out, _ = _run(_cfg(tmp_path, TOY), tmp_path / "o")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "point,mask,rank,loss,is_local_min,rho,eig_0,eig_1"
    rows = [r.split(",") for r in lines[1:]]
    assert {r[1] for r in rows} == {"00", "10"}
    best = [r for r in rows if r[1] == "10"][0]
    assert float(best[3]) == pytest.approx(-0.25) and best[4] == "1"
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["global_minimum"]["mask"] == "10"


def test_predict(tmp_path):
    code, out, _ = _run(_cfg(tmp_path, {**TOY, "command": "predict"}), tmp_path / "o")
    assert code == 0 and "collapses" in out and "survives" in out


def test_bad_theta_exit_2(tmp_path):
    body = {"command": "solve", "instance": {"d0": 2, "augmentation": {"kind": "structured", "sigma": 1,
                                                                       "theta": 1.5}}}
    code, _, err = _run(_cfg(tmp_path, body), tmp_path / "o")
    assert code == 2 and "instance.augmentation.theta" in err


def test_unknown_key_and_bad_json(tmp_path):
    code, _, err = _run(_cfg(tmp_path, {**TOY, "bogus": 1}), tmp_path / "o")
    assert code == 2 and "bogus" in err
    p = tmp_path / "broken.json"
    p.write_text('{"command": "solve",\n  "seed": }')
    code, _, err = _run(p, tmp_path / "o")
    assert code == 2 and "line 2" in err
    code, _, err = _run(tmp_path / "missing.json", tmp_path / "o")
    assert code == 2


def test_missing_matrix_file(tmp_path):
    body = {"command": "solve", "instance": {"d0": 2, "a0": {"file": str(tmp_path / "nope.csv")}}}
    code, _, err = _run(_cfg(tmp_path, body), tmp_path / "o")
    assert code == 2 and "nope.csv" in err


def test_singular_sigma_exit_3(tmp_path):
    body = {"command": "solve", "instance": {"d0": 2, "a0": {"diag": [1.0, 0.0]}}}
    code, _, err = _run(_cfg(tmp_path, body), tmp_path / "o")
    assert code == 3 and "SingularSigma" in err
    assert json.loads((tmp_path / "o" / "error.json").read_text())["error"] == "SingularSigma"


def test_diverged_exit_3(tmp_path):
    body = {"command": "train", "instance": {"d0": 2, "a0": {"diag": [1.0, 2.0]}},
            "trainer": {"optimizer": "gd", "lr": 50.0, "max_iters": 100, "init_scale": 1.0, "record_every": 1}}
    code, _, _ = _run(_cfg(tmp_path, body), tmp_path / "o")
    assert code == 3
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["error"] == "Diverged" and "last_checkpoint" in err
    assert json.loads((tmp_path / "o" / "meta.json").read_text())["meta"]["status"] == "failed"


def test_overrides(tmp_path):
    cfg = load_config(_cfg(tmp_path, TOY), ["instance.loss.beta=0.25", "seed=7"])
    assert cfg.instance.loss.beta == 0.25 and cfg.seed == 7
    with pytest.raises(ConfigError):
        load_config(_cfg(tmp_path, TOY), ["noequals"])


def test_sweep_artifacts_and_roundtrip(tmp_path):
    body = {"command": "sweep:sigma_scaling", "sweep": {"a": [1.0, 1.0, 1.0], "sigmas": [0.5, 1.0, 2.0, 4.0]}}
    code, _, _ = _run(_cfg(tmp_path, body), tmp_path / "a")
    assert code == 0
    for f in ("results.csv", "meta.json", "plot.svg", "plot.png", "summary.json"):
        assert (tmp_path / "a" / f).is_file()
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert meta["meta"]["status"] == "ok" and meta["meta"]["seeds"]["seed"] == 0
    code, _, _ = _run(tmp_path / "a" / "meta.json", tmp_path / "b")
    assert code == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("COLLAPSELAB_THREADS", "3")
    body = {"command": "sweep:phase_diagram", "sweep": {"sigmas": [0, 1, 2], "thetas": [0, 0.5, 1]}}
    assert _run(_cfg(tmp_path, body), tmp_path / "o")[0] == 0
    assert json.loads((tmp_path / "o" / "meta.json").read_text())["meta"]["threads"] == 3
    monkeypatch.setenv("COLLAPSELAB_THREADS", "many")
    assert _run(_cfg(tmp_path, body), tmp_path / "o")[0] == 2


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    text = capsys.readouterr().out
    for line in config_keys():
        key = line.split()[0]
        assert key in text
    assert "instance.augmentation.theta" in text and "trainer.lr" in text


def test_console_script(tmp_path):
    cfg = _cfg(tmp_path, TOY)
    res = subprocess.run([sys.executable, "-m", "collapselab.cli", "--config", str(cfg), "--out",
                          str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("point,mask")


def _grid2():
    g = SweepGrid("h", [Axis("sigma", [0.0, 1.0, 2.0]), Axis("theta", [0.0, 1.0])], ["v"])
    for idx in g.indices():
        g.set(idx, {"v": float(sum(idx))})
    return g


def test_svg_lines_and_heatmap():
    g = SweepGrid("l", [Axis("x", [1.0, 10.0, 100.0])], ["a", "b"])
    for i in range(3):
        g.set((i,), {"a": float(i + 1), "b": float(2 * i + 1)})
    svg = render_svg(g, log_x=True)
    assert svg.count("<polyline") == 2 and "x (log)" in svg
    heat = render_svg(_grid2(), key="v")
    # background, frame, 6 cells, 32 colorbar steps and the colorbar border
    assert heat.count("<rect") == 41 and "sigma" in heat and "theta" in heat
    assert render_svg(_grid2()) == render_svg(_grid2())


def test_svg_empty_grid():
    with pytest.raises(EmptyGrid):
        render_svg(SweepGrid("e", [Axis("x", [1.0])], ["v"]))
    with pytest.raises(EmptyGrid):
        render_png(SweepGrid("e", [Axis("x", [1.0])], ["v"]), "unused.png")


def test_png(tmp_path):
    render_png(_grid2(), tmp_path / "h.png")
    assert (tmp_path / "h.png").read_bytes()[:4] == b"\x89PNG"
