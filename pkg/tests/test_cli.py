"""End-to-end command-line tests driving main() in process: the
generate/train/predict/evaluate chain, dry runs, config overrides, exit
codes, and the never-writes guarantee of validate."""

import io
import json
import os
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from tdtwin.cli import main
from tdtwin.fml import load_model
from tdtwin.pipeline import load_dataset, load_trajectories
from tdtwin.predict import read_series_csv, write_series_csv


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


def gen_config(tmp_path, **overrides):
    doc = {
        "system": "stuart_landau",
        "ranges": {"hidden": [[0.5, 1.5], [0.94, 1.57], [0.0, 0.0]],
                   "init": [[-1.3, 1.3], [-1.3, 1.3]]},
        "N_sim": 3,
        "N_step": 30,
        "n_M": 3,
        "n_R": 2,
        "n_B": 5,
        "dt": 0.1,
        "inner_dt": 0.05,
        "seed": 7,
    }
    doc.update(overrides)
    return write_json(tmp_path / "gen.json", doc)


def train_config(tmp_path, **overrides):
    doc = {
        "hidden_widths": [8],
        "n_R": 2,
        "batch_size": 8,
        "epochs": 2,
        "lr_base": 1e-4,
        "lr_max": 1e-3,
        "lr_decay": 0.999,
        "lr_half_cycle": 10,
        "seed": 1,
    }
    doc.update(overrides)
    return write_json(tmp_path / "train.json", doc)


@pytest.fixture
def generated(tmp_path):
    cfg = gen_config(tmp_path)
    out = tmp_path / "data"
    code, stdout, stderr = run_cli("generate", "--config", cfg, "--out", out)
    assert code == 0, stderr
    return cfg, out


# generate


def test_generate_writes_both_files(generated, tmp_path):
    _, out = generated
    ds = load_dataset(out / "dataset.fmld")
    trajs = load_trajectories(out / "trajectories.fmlt")
    assert ds.n_data == 3 * 5
    assert ds.memory_steps == 3 and ds.rollout_steps == 2
    assert len(trajs) == 3
    assert all(len(tr) == 31 for tr in trajs)


def test_generate_reports_plan_and_dry_run_writes_nothing(tmp_path):
    cfg = gen_config(tmp_path)
    out = tmp_path / "nothing"
    code, stdout, _ = run_cli("generate", "--config", cfg, "--out", out,
                              "--dry-run")
    assert code == 0
    assert "N_sim=3" in stdout and "N_data=15" in stdout
    assert "dry run" in stdout
    assert not out.exists()


def test_generate_dry_run_handles_production_scale_instantly(tmp_path):
    cfg = gen_config(tmp_path, N_sim=7800, N_step=2000, n_M=49, n_R=10, n_B=10)
    code, stdout, _ = run_cli("generate", "--config", cfg, "--dry-run")
    assert code == 0
    assert "N_data=78000" in stdout


def test_generate_rejects_oversubscribed_bursts(tmp_path):
    cfg = gen_config(tmp_path, N_step=6, n_B=50)
    code, _, stderr = run_cli("generate", "--config", cfg, "--dry-run")
    assert code == 2
    assert "error:" in stderr


def test_generate_requires_config(tmp_path):
    code, _, stderr = run_cli("generate", "--out", tmp_path)
    assert code == 2
    assert "config" in stderr


def test_set_overrides(tmp_path):
    cfg = gen_config(tmp_path)
    code, stdout, _ = run_cli("generate", "--config", cfg, "--dry-run",
                              "--set", "N_sim=5")
    assert code == 0 and "N_sim=5" in stdout
    code, _, stderr = run_cli("generate", "--config", cfg, "--dry-run",
                              "--set", "nope=1")
    assert code == 2 and "nope" in stderr
    code, _, stderr = run_cli("generate", "--config", cfg, "--dry-run",
                              "--set", "N_sim")
    assert code == 2 and "KEY=VALUE" in stderr


def test_generate_is_deterministic_and_seed_flag_changes_it(tmp_path):
    cfg = gen_config(tmp_path)
    outs = [tmp_path / f"d{i}" for i in range(3)]
    run_cli("generate", "--config", cfg, "--out", outs[0])
    run_cli("generate", "--config", cfg, "--out", outs[1])
    run_cli("generate", "--config", cfg, "--out", outs[2], "--seed", "8")
    for name in ("dataset.fmld", "trajectories.fmlt"):
        a = (outs[0] / name).read_bytes()
        b = (outs[1] / name).read_bytes()
        c = (outs[2] / name).read_bytes()
        assert a == b
        assert a != c


def test_generate_workers_flag_gives_identical_output(tmp_path):
    cfg = gen_config(tmp_path)
    seq, par = tmp_path / "seq", tmp_path / "par"
    assert run_cli("generate", "--config", cfg, "--out", seq)[0] == 0
    assert run_cli("generate", "--config", cfg, "--out", par,
                   "--workers", "2")[0] == 0
    for name in ("dataset.fmld", "trajectories.fmlt"):
        assert (seq / name).read_bytes() == (par / name).read_bytes()


# train


def test_train_writes_model_and_history(generated, tmp_path):
    _, data = generated
    cfg = train_config(tmp_path)
    out = tmp_path / "fit"
    code, stdout, stderr = run_cli("train", data / "dataset.fmld",
                                   "--config", cfg, "--out", out)
    assert code == 0, stderr
    assert "batches/epoch" in stdout
    model = load_model(out / "model.fmlm")
    assert model.layer_widths == (8, 8, 2)
    lines = (out / "loss_history.csv").read_text().strip().splitlines()
    assert lines[0] == "epoch,loss"
    assert len(lines) == 3


def test_train_dry_run_writes_nothing(generated, tmp_path):
    _, data = generated
    cfg = train_config(tmp_path)
    out = tmp_path / "none"
    code, stdout, _ = run_cli("train", data / "dataset.fmld",
                              "--config", cfg, "--out", out, "--dry-run")
    assert code == 0
    assert "dry run" in stdout
    assert not out.exists()


def test_train_config_schema_errors(generated, tmp_path):
    _, data = generated
    bad = write_json(tmp_path / "bad.json", {"epochs": 1, "seed": 1})
    code, _, stderr = run_cli("train", data / "dataset.fmld", "--config", bad)
    assert code == 2 and "hidden_widths" in stderr
    cfg = train_config(tmp_path, n_R=9)
    code, _, stderr = run_cli("train", data / "dataset.fmld", "--config", cfg)
    assert code == 2 and "n_R" in stderr
    cfg = train_config(tmp_path, typo=1)
    code, _, stderr = run_cli("train", data / "dataset.fmld", "--config", cfg)
    assert code == 2 and "typo" in stderr


def test_train_missing_dataset_is_a_data_error(tmp_path):
    cfg = train_config(tmp_path)
    code, _, stderr = run_cli("train", tmp_path / "absent.fmld",
                              "--config", cfg)
    assert code == 3
    assert "error:" in stderr


# predict


@pytest.fixture
def trained(generated, tmp_path):
    _, data = generated
    cfg = train_config(tmp_path)
    out = tmp_path / "fit"
    code, _, stderr = run_cli("train", data / "dataset.fmld",
                              "--config", cfg, "--out", out)
    assert code == 0, stderr
    return out / "model.fmlm"


def window_csv(tmp_path, rows=4, cols=2, dt=0.1):
    rng = np.random.default_rng(3)
    path = tmp_path / "window.csv"
    write_series_csv(path, dt * np.arange(rows), rng.normal(size=(rows, cols)))
    return path


def test_predict_continues_the_time_axis(trained, tmp_path):
    win = window_csv(tmp_path)
    out = tmp_path / "pred"
    code, stdout, stderr = run_cli("predict", "--model", trained,
                                   "--window", win, "--horizon", 5,
                                   "--out", out)
    assert code == 0, stderr
    t, values, names = read_series_csv(out / "prediction.csv")
    assert values.shape == (5, 2)
    assert np.allclose(t, 0.3 + 0.1 * np.arange(1, 6))
    assert names == ["q0", "q1"]


def test_predict_validates_window_and_horizon(trained, tmp_path):
    bad = window_csv(tmp_path, rows=3)
    code, _, stderr = run_cli("predict", "--model", trained, "--window", bad,
                              "--horizon", 5)
    assert code == 2 and "4 rows" in stderr
    win = window_csv(tmp_path)
    code, _, stderr = run_cli("predict", "--model", trained, "--window", win,
                              "--horizon", 0)
    assert code == 2
    code, _, stderr = run_cli("predict", "--model", trained, "--window", win,
                              "--horizon", 2, "--params", "1.0")
    assert code == 2 and "parameters" in stderr


def test_predict_rejects_ragged_time_column(trained, tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("t,q0,q1\n0.0,1.0,0.0\n0.1,1.0,0.0\n0.3,1.0,0.0\n0.4,1.0,0.0\n")
    code, _, stderr = run_cli("predict", "--model", trained, "--window", path,
                              "--horizon", 2)
    assert code == 3 and "uniform" in stderr


def test_predict_dry_run_writes_nothing(trained, tmp_path):
    win = window_csv(tmp_path)
    out = tmp_path / "none"
    code, stdout, _ = run_cli("predict", "--model", trained, "--window", win,
                              "--horizon", 5, "--out", out, "--dry-run")
    assert code == 0 and "dry run" in stdout
    assert not out.exists()


# evaluate


def test_evaluate_series_reports_errors_and_peaks(tmp_path):
    t = 0.1 * np.arange(64)
    ref = np.sin(2 * np.pi * 1.25 * t)[:, None]
    pred = ref + 0.01
    write_series_csv(tmp_path / "ref.csv", t, ref, names=["x"])
    write_series_csv(tmp_path / "pred.csv", t, pred, names=["x"])
    out = tmp_path / "m"
    code, stdout, stderr = run_cli("evaluate", tmp_path / "pred.csv",
                                   tmp_path / "ref.csv", "--out", out)
    assert code == 0, stderr
    doc = json.loads((out / "metrics.json").read_text())
    assert doc["mode"] == "series"
    comp = doc["components"]["x"]
    assert comp["rms_error"] == pytest.approx(0.01, rel=1e-9)
    assert comp["max_error"] == pytest.approx(0.01, rel=1e-9)
    assert comp["pred_peaks"][0][0] == pytest.approx(1.25, abs=0.16)
    assert json.loads(stdout[:stdout.rindex("}") + 1]) == doc


def test_evaluate_fourier_mode(tmp_path):
    (tmp_path / "p.csv").write_text("term,value\na0,1.0\na1,0.5\nb1,0.0\n")
    (tmp_path / "r.csv").write_text("term,value\na0,1.0\na1,0.0\nb1,0.0\n")
    out = tmp_path / "m"
    code, stdout, _ = run_cli("evaluate", tmp_path / "p.csv",
                              tmp_path / "r.csv", "--out", out)
    assert code == 0
    doc = json.loads((out / "metrics.json").read_text())
    assert doc["mode"] == "fourier"
    assert doc["l2_surface_error"] == pytest.approx(np.sqrt(np.pi * 0.25))


def test_evaluate_rejects_mismatches(tmp_path):
    t = 0.1 * np.arange(20)
    write_series_csv(tmp_path / "a.csv", t, np.zeros((20, 1)), names=["x"])
    write_series_csv(tmp_path / "b.csv", t + 0.05, np.zeros((20, 1)), names=["x"])
    write_series_csv(tmp_path / "c.csv", t, np.zeros((20, 1)), names=["y"])
    (tmp_path / "f.csv").write_text("term,value\na0,1.0\n")
    code, _, stderr = run_cli("evaluate", tmp_path / "a.csv", tmp_path / "b.csv")
    assert code == 3 and "misaligned" in stderr
    code, _, stderr = run_cli("evaluate", tmp_path / "a.csv", tmp_path / "c.csv")
    assert code == 3 and "names" in stderr
    code, _, stderr = run_cli("evaluate", tmp_path / "a.csv", tmp_path / "f.csv")
    assert code == 3 and "Fourier" in stderr


def test_evaluate_dry_run_prints_but_does_not_write(tmp_path):
    t = 0.1 * np.arange(20)
    write_series_csv(tmp_path / "a.csv", t, np.ones((20, 1)), names=["x"])
    out = tmp_path / "none"
    code, stdout, _ = run_cli("evaluate", tmp_path / "a.csv", tmp_path / "a.csv",
                              "--out", out, "--dry-run")
    assert code == 0
    assert json.loads(stdout)["components"]["x"]["rms_error"] == 0.0
    assert not out.exists()


# spectrum


def test_spectrum_command_outputs(tmp_path):
    t = 0.1 * np.arange(128)
    vals = np.stack([np.sin(2 * np.pi * 2.5 * t),
                     np.cos(2 * np.pi * 1.25 * t)], axis=1)
    write_series_csv(tmp_path / "s.csv", t, vals, names=["x", "y"])
    out = tmp_path / "spec"
    code, stdout, stderr = run_cli("spectrum", tmp_path / "s.csv", "--out", out)
    assert code == 0, stderr
    doc = json.loads((out / "peaks.json").read_text())
    assert doc["peaks"]["x"][0][0] == pytest.approx(2.5)
    assert doc["peaks"]["y"][0][0] == pytest.approx(1.25)
    lines = (out / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "frequency,x,y"
    assert len(lines) == 1 + 65


def test_spectrum_dry_run_writes_nothing(tmp_path):
    t = 0.1 * np.arange(32)
    write_series_csv(tmp_path / "s.csv", t, np.sin(t), names=["x"])
    out = tmp_path / "none"
    code, stdout, _ = run_cli("spectrum", tmp_path / "s.csv", "--out", out,
                              "--dry-run")
    assert code == 0 and "peaks" in stdout
    assert not out.exists()


# validate


def test_validate_accepts_all_artifact_kinds(generated, trained, tmp_path):
    cfg, data = generated
    code, stdout, stderr = run_cli(
        "validate", "--config", cfg,
        data / "dataset.fmld", data / "trajectories.fmlt", trained)
    assert code == 0, stderr
    assert stdout.count("OK ") == 4
    assert "OK config" in stdout and "OK dataset" in stdout
    assert "OK trajectories" in stdout and "OK model" in stdout


def test_validate_never_writes(generated, tmp_path):
    cfg, _ = generated
    out = tmp_path / "never"
    code, _, _ = run_cli("validate", "--config", cfg, "--out", out)
    assert code == 0
    assert not out.exists()


def test_validate_flags_corrupt_files_and_empty_invocations(tmp_path):
    bad = tmp_path / "junk.fmld"
    bad.write_bytes(b"FMLD" + b"\x00" * 3)
    code, _, stderr = run_cli("validate", bad)
    assert code == 3 and "error:" in stderr
    code, _, stderr = run_cli("validate")
    assert code == 2 and "nothing to validate" in stderr


# divergence surfaces as exit code 4


def test_divergent_generation_exits_4(tmp_path):
    cfg = write_json(tmp_path / "blow.json", {
        "system": "van_der_pol",
        "ranges": {"hidden": [[80.0, 80.0]], "init": [[2.0, 2.0], [0.0, 0.0]]},
        "N_sim": 1,
        "N_step": 5,
        "n_M": 0,
        "n_R": 1,
        "n_B": 1,
        "dt": 1.5,
        "inner_dt": 1.5,
        "seed": 0,
    })
    code, _, stderr = run_cli("generate", "--config", cfg, "--out",
                              tmp_path / "x")
    assert code == 4
    assert "diverged" in stderr
