import json
import subprocess
import sys

import pytest

from geomnet import cli
from geomnet import serialization as ser


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    return code, json.loads(out), err


@pytest.fixture(scope="module")
def gravity_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("gravity")
    assert cli.main(["gen-data", "--problem", "gravity", "--seed", "1", "--N", "5",
                     "--train", "4", "--val", "2", "--test", "3", "--out", str(out)]) == 0
    return out


# ---------------------------------------------------------------------------
# filters and counting


@pytest.mark.parametrize("M,parity,expected", [(3, -1, 0), (5, -1, 1), (3, 1, 3)])
def test_filters_counts(capsys, M, parity, expected):
    code, payload, _ = run_json(capsys, "filters", "--d", 2, "--M", M, "--k", 0, "--parity", parity)
    assert code == 0 and payload["count"] == expected


def test_filters_file_and_rerun(capsys, tmp_path):
    out = tmp_path / "bank.json"
    assert run(capsys, "filters", "--M", 5, "--k", 1, "--parity", 1, "--out", out)[0] == 0
    first = out.read_bytes()
    manifest = json.loads((tmp_path / "bank.json.manifest.json").read_text())
    assert manifest["command"] == "filters" and manifest["flags"]["M"] == 5
    assert manifest["outputs"][str(out)] == ser.sha256_file(out)
    run(capsys, "filters", "--M", 5, "--k", 1, "--parity", 1, "--out", out)
    assert out.read_bytes() == first
    assert ser.read_json(out)["count"] == 6


def test_filters_rejects_bad_flags(capsys):
    code, _, err = run(capsys, "filters", "--M", 4, "--k", 0, "--parity", 1)
    assert code == 2 and "odd" in err
    with pytest.raises(SystemExit):
        cli.main(["filters", "--M", "3", "--k", "0", "--parity", "2"])


def test_count_all_routes(capsys):
    code, rep, _ = run_json(capsys, "count", "--N", 3, "--degree", 1, "--mode", "all")
    assert code == 0
    assert rep["closed_form"] == rep["molien"] == rep["empirical"] == 5 and rep["consistent"]


def test_count_closed(capsys):
    code, rep, _ = run_json(capsys, "count", "--N", 5, "--degree", 2, "--mode", "closed")
    assert code == 0 and rep["closed_form"] == 312


def test_count_degree_zero(capsys):
    code, rep, _ = run_json(capsys, "count", "--N", 3, "--degree", 0, "--mode", "all")
    assert code == 0 and rep["closed_form"] == rep["molien"] == 0


def test_count_partial_budget(capsys):
    code, out, _ = run(capsys, "count", "--N", 3, "--degree", 2, "--mode", "empirical", "--max-candidates", 5)
    assert code == 0 and "stopped by budget" in out


def test_count_rejects_even_n(capsys):
    assert run(capsys, "count", "--N", 4, "--degree", 1)[0] == 2


# ---------------------------------------------------------------------------
# equivariance checks


def test_check_equivariance_preset_passes(capsys):
    code, rep, _ = run_json(capsys, "check-equivariance", "--net", "relu_stack", "--trials", 2)
    assert code == 0 and rep["pass"] and rep["max_violation"] <= 1e-8


def test_check_equivariance_baseline_fails(capsys):
    code, rep, _ = run_json(capsys, "check-equivariance", "--net", "gravity_baseline", "--N", 5)
    assert code == 1 and not rep["pass"] and rep["max_violation"] > 1e-3


def test_check_equivariance_zero_params(capsys):
    code, rep, _ = run_json(capsys, "check-equivariance", "--net", "charge_baseline", "--params", "zero")
    assert code == 0 and rep["max_violation"] == 0.0


def test_check_equivariance_errors(capsys, tmp_path):
    assert run(capsys, "check-equivariance", "--net", "relu_stack", "--N", 4)[0] == 2
    assert run(capsys, "check-equivariance", "--net", tmp_path / "missing.json")[0] == 2
    bad = ser.write_json(tmp_path / "m.json", ser.params_to_json([0.0], cli.preset("relu_stack")))
    assert run(capsys, "check-equivariance", "--net", "relu_stack", "--params", bad)[0] == 2


def test_check_equivariance_spec_file(capsys, tmp_path):
    spec = ser.write_json(tmp_path / "spec.json", cli.preset("polynomial"))
    assert run(capsys, "check-equivariance", "--net", spec)[0] == 0


# ---------------------------------------------------------------------------
# data, training and evaluation


def test_gen_data_split_layout(capsys, tmp_path):
    code, payload, _ = run_json(capsys, "gen-data", "--problem", "gravity", "--train", 10, "--val", 5,
                                "--test", 10, "--out", tmp_path)
    assert code == 0 and payload["samples"] == 25
    sizes = {s: len(ser.read_json(tmp_path / f"{s}.json")["samples"]) for s in ("train", "val", "test")}
    assert sizes == {"train": 10, "val": 5, "test": 10}
    indices = [smp["metadata"]["index"] for s in ("test", "val", "train")
               for smp in ser.read_json(tmp_path / f"{s}.json")["samples"]]
    assert indices == list(range(25))


def test_gen_data_default_val(capsys, tmp_path):
    run(capsys, "gen-data", "--problem", "charge", "--N", 5, "--train", 1, "--test", 1, "--out", tmp_path)
    assert len(ser.read_json(tmp_path / "val.json")["samples"]) == 10


@pytest.mark.parametrize("flag,value", [("--dt", 0), ("--dt", -1), ("--squash", 0), ("--steps", 0)])
def test_gen_data_rejects_bad_constants(capsys, tmp_path, flag, value):
    code, _, err = run(capsys, "gen-data", "--problem", "charge", "--out", tmp_path, flag, value)
    assert code == 2 and err


def test_gen_data_is_byte_identical(capsys, tmp_path):
    argv = ["gen-data", "--problem", "charge", "--N", 5, "--train", 2, "--val", 1, "--test", 1, "--out", tmp_path]
    run(capsys, *argv)
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    run(capsys, *argv)
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == first


def test_train_and_eval(capsys, tmp_path, gravity_data):
    out = tmp_path / "run"
    code, rep, _ = run_json(capsys, "train", "--problem", "gravity", "--data", gravity_data,
                            "--max-epochs", 3, "--out", out)
    assert code == 0 and rep["epochs"] == 3
    lines = (out / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_rmse,val_rmse,lr" and len(lines) == 5
    model = ser.read_json(out / "model.json")
    assert model["n_params"] == len(model["params"]) == 3082
    manifest = ser.read_json(out / "manifest.json")
    assert set(manifest["outputs"]) == {str(out / "model.json"), str(out / "loss.csv")}
    # the saved parameters reproduce the logged loss at the best epoch
    code, ev, _ = run_json(capsys, "eval", "--model-file", out / "model.json", "--data", gravity_data, "--split", "train")
    best = lines[1 + model["best_epoch"]].split(",")
    assert ev["mean_rmse"] == pytest.approx(float(best[1]), rel=1e-12)
    assert len(ev["per_sample_rmse"]) == 4


def test_train_rerun_is_identical(capsys, tmp_path, gravity_data):
    argv = ["train", "--problem", "gravity", "--model", "baseline", "--data", gravity_data,
            "--max-epochs", 2, "--seed", 4, "--out", tmp_path]
    run(capsys, *argv)
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    run(capsys, *argv)
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == first


def test_train_config_file(capsys, tmp_path, gravity_data):
    cfg = ser.write_json(tmp_path / "cfg.json", {"lr": 0.001, "max_epochs": 1})
    code, _, _ = run(capsys, "train", "--problem", "gravity", "--data", gravity_data, "--config", cfg,
                     "--boundary", "zero", "--out", tmp_path / "r")
    model = ser.read_json(tmp_path / "r" / "model.json")
    assert code == 0 and model["config"]["lr"] == 0.001 and model["spec"]["boundary"] == "zero"
    bad = ser.write_json(tmp_path / "bad.json", {"momentum": 0.9})
    assert run(capsys, "train", "--problem", "gravity", "--data", gravity_data, "--config", bad,
               "--out", tmp_path / "r2")[0] == 2


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_train_divergence_writes_dump(capsys, tmp_path):
    data = tmp_path / "data"
    run(capsys, "gen-data", "--problem", "gravity", "--N", 5, "--train", 2, "--val", 1, "--test", 0, "--out", data)
    obj = ser.read_json(data / "train.json")
    obj["samples"][0]["target"]["data"][0] = 1e308
    ser.write_json(data / "train.json", obj)
    code, _, err = run(capsys, "train", "--problem", "gravity", "--data", data, "--max-epochs", 2,
                       "--out", tmp_path / "r")
    assert code == 2 and "diverged" in err
    dump = ser.read_json(tmp_path / "r" / "divergence_dump.json")
    assert dump["epoch"] == 1 and len(dump["params"]) == 3082


def test_sweep_csv(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--problem", "gravity", "--N", 5, "--sizes", "2", "--seeds", "0",
                     "--max-epochs", 1, "--out", out)
    lines = out.read_text().splitlines()
    assert code == 0 and lines[0] == "problem,model,seed,n_train,n_params,best_epoch,train_rmse,test_rmse"
    assert [line.split(",")[1] for line in lines[1:]] == ["ginet", "baseline"]


def test_presets_listing(capsys):
    code, payload, _ = run_json(capsys, "presets")
    rows = {r["preset"]: r for r in payload["presets"]}
    assert code == 0 and rows["gravity_baseline"]["n_params"] == rows["gravity_baseline"]["reference"] == 4345


def test_threads_flag(capsys, monkeypatch):
    assert run(capsys, "presets", "--threads", 1)[0] == 0
    monkeypatch.setenv("GEOMNET_THREADS", "0")
    assert run(capsys, "presets")[0] == 2


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "geomnet.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("geomnet ")
