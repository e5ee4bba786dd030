import json
import re
import subprocess
import sys

import numpy as np
import pytest

from isindy.cli import main
from isindy.engine import modeling_error
from isindy.io import load_model, read_csv


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("ISINDY_DICTIONARY_CAP", raising=False)

    def _run(*argv):
        return main([str(a) for a in argv])
    return _run


@pytest.fixture
def logistic_csv(run, tmp_path):
    assert run("simulate", "logistic", "--r", 3.9, "--steps", 500, "--out", "logistic.csv") == 0
    return tmp_path / "logistic.csv"


@pytest.fixture
def lorenz_csv(run, tmp_path):
    assert run("simulate", "lorenz", "--steps", 10000, "--out", "lorenz.csv") == 0
    return tmp_path / "lorenz.csv"


def test_simulate_shapes(run, lorenz_csv, tmp_path, capsys):
    assert read_csv(lorenz_csv).samples.shape == (10001, 3)
    assert run("simulate", "logistic", "--r", 3.9, "--steps", 500, "--out", "lg.csv") == 0
    assert read_csv(tmp_path / "lg.csv").samples.shape == (501, 1)
    assert "501 x 1" in capsys.readouterr().out


def test_simulate_bad_dt_names_flag(run, capsys):
    with pytest.raises(SystemExit) as info:
        run("simulate", "lorenz", "--dt", 0, "--out", "x.csv")
    assert info.value.code == 1
    assert "--dt" in capsys.readouterr().err


def test_simulate_divergence_is_numerical_failure(run, capsys):
    assert run("simulate", "lorenz", "--dt", 1.0, "--steps", 100, "--out", "x.csv") == 3
    assert "non-finite" in capsys.readouterr().err


def test_fit_logistic_equation(run, logistic_csv, tmp_path, capsys):
    cfg = tmp_path / "fit.cfg"
    cfg.write_text(f"data = {logistic_csv}\nS = 2\nbeta = 1e-4\ntau = 1e-4\n")
    assert run("fit", "--config", cfg, "--out", "m.txt") == 0
    out = capsys.readouterr().out
    lhs, rhs = out.splitlines()[0].split(" = ")
    assert lhs == "x'"
    terms = {t.split("·", 1)[1] for t in re.split(r" [+-] ", rhs.lstrip("-"))}
    assert terms == {"x", "x^2"}
    assert (tmp_path / "m.txt").exists()
    report = json.loads((tmp_path / "m.report.json").read_text())
    assert report["total_order"] == 2


def test_flag_beats_config(run, logistic_csv, tmp_path):
    cfg = tmp_path / "fit.cfg"
    cfg.write_text(f"data = {logistic_csv}\nS = 2\nbeta = 0.5\n")
    assert run("fit", "--config", cfg, "--beta", 1e-4, "--out", "m.txt") == 0
    assert load_model(tmp_path / "m.txt").config["beta"] == 1e-4


def test_fit_missing_data(run, capsys):
    assert run("fit", "--data", "nowhere.csv") == 2
    assert "nowhere.csv" in capsys.readouterr().err


def test_fit_grid_is_usage_error(run, logistic_csv, capsys):
    assert run("fit", "--data", logistic_csv, "--beta", "[0.1, 1]") == 1
    assert "bench" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(run):
    with pytest.raises(SystemExit) as info:
        run("fit", "--bogus")
    assert info.value.code == 1


def test_bad_config_value_is_parse_error(run, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("data = a.csv\nbeta = abc\n")
    assert run("fit", "--config", cfg) == 2
    assert "beta" in capsys.readouterr().err


def test_cap_env_override(run, logistic_csv, monkeypatch, capsys):
    monkeypatch.setenv("ISINDY_DICTIONARY_CAP", "3")
    assert run("fit", "--data", logistic_csv, "--engine", "conventional", "--S", 4) == 2
    assert "cap" in capsys.readouterr().err


def test_predict_lorenz_rollout(run, lorenz_csv, tmp_path, capsys):
    assert run("fit", "--data", lorenz_csv, "--out", "lz.txt") == 0
    assert run("predict", "--model", "lz.txt", "--x0=-8,7,27", "--steps", 10000, "--out", "ro.csv") == 0
    traj = read_csv(tmp_path / "ro.csv").samples
    assert traj.shape == (10001, 3)
    assert np.abs(traj).max() < 100
    assert "bounded" in capsys.readouterr().out


def test_predict_with_reference_error_columns(run, lorenz_csv, tmp_path):
    assert run("fit", "--data", lorenz_csv, "--out", "lz.txt") == 0
    assert run("predict", "--model", "lz.txt", "--data", lorenz_csv, "--steps", 50, "--out", "ro.csv") == 0
    ro = read_csv(tmp_path / "ro.csv")
    assert ro.labels == ("x", "y", "z", "err_1", "err_2", "err_3")
    ref = read_csv(lorenz_csv).samples[:51]
    np.testing.assert_array_equal(ro.samples[:, 3:], ref - ro.samples[:, :3])


def test_predict_one_step_matches_modeling_error(run, lorenz_csv, tmp_path, capsys):
    assert run("fit", "--data", lorenz_csv, "--out", "lz.txt") == 0
    capsys.readouterr()
    assert run("predict", "--model", "lz.txt", "--data", lorenz_csv, "--one-step", "--out", "os.csv") == 0
    errs = read_csv(tmp_path / "os.csv").samples[:, 3:]
    agg = modeling_error(load_model(tmp_path / "lz.txt"), read_csv(lorenz_csv))
    assert np.sum(errs**2) / errs.shape[0] == pytest.approx(agg, rel=1e-12)
    assert f"{agg:.10g}" in capsys.readouterr().out


def test_predict_malformed_model(run, tmp_path, capsys):
    (tmp_path / "bad.txt").write_text("isindy-model 1\nN=1\noutputs=1\nconfig={}\noutput 1\ndim=1\n1\ncoefficients 1\nabc\nend\n")
    assert run("predict", "--model", "bad.txt", "--x0", "0.5", "--steps", 3, "--out", "o.csv") == 2
    assert "line 9" in capsys.readouterr().err


def test_predict_divergence_exit_code(run, tmp_path):
    (tmp_path / "grow.txt").write_text("isindy-model 1\nN=1\noutputs=1\noutput 1\ndim=1\n1\ncoefficients 1\n2.0\nend\n")
    assert run("predict", "--model", "grow.txt", "--x0", "1", "--steps", 100, "--out", "o.csv") == 3
    assert read_csv(tmp_path / "o.csv").T == 20


def test_show(run, logistic_csv, capsys):
    assert run("fit", "--data", logistic_csv, "--S", 2, "--beta", 1e-4, "--tau", 1e-4, "--out", "m.txt") == 0
    capsys.readouterr()
    assert run("show", "m.txt") == 0
    out = capsys.readouterr().out
    assert "x' = 3.9·x - 3.9·x^2" in out


def test_bench_beta_grid(run, logistic_csv, tmp_path, capsys):
    cfg = tmp_path / "b.cfg"
    cfg.write_text(f"data = {logistic_csv}\nS = 2\nbeta = [1e-4, 1e-3, 1e-2]\n")
    assert run("bench", "--config", cfg, "--out", "sweep.csv") == 0
    text = (tmp_path / "sweep.csv").read_text()
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert len(body) == 1 + 3 * 2
    assert "results -> sweep.csv" in capsys.readouterr().out


def test_bench_requires_one_grid(run, logistic_csv):
    assert run("bench", "--data", logistic_csv) == 1


def test_bench_dimension_grid_jsonl(run, tmp_path):
    assert run("simulate", "surrogate", "--steps", 200, "--columns", 4, "--out", "s.csv") == 0
    cfg = tmp_path / "n.cfg"
    cfg.write_text("data = s.csv\nN = [2, 3]\nS = 2\nformat = jsonl\n")
    assert run("bench", "--config", cfg, "--out", "n.jsonl") == 0
    rows = [json.loads(ln) for ln in (tmp_path / "n.jsonl").read_text().splitlines()[1:]]
    assert sorted((r["value"], r["engine"]) for r in rows) == [
        (2, "conventional"), (2, "iterative"), (3, "conventional"), (3, "iterative")]


def test_identical_outputs_for_identical_inputs(run, tmp_path):
    for tag in ("a", "b"):
        assert run("simulate", "surrogate", "--steps", 100, "--columns", 3, "--seed", 4, "--out", f"{tag}.csv") == 0
        assert run("fit", "--data", f"{tag}.csv", "--S", 2, "--out", f"{tag}.txt") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_module_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "isindy", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("simulate", "fit", "predict", "bench", "show"):
        assert sub in out.stdout
    assert "ISINDY_DICTIONARY_CAP" in out.stdout
    fit_help = subprocess.run([sys.executable, "-m", "isindy", "fit", "--help"], capture_output=True, text=True)
    for flag in ("--config", "--beta", "--S", "--tau", "--engine", "--seed", "--out", "--format"):
        assert flag in fit_help.stdout
