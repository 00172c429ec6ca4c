import json
import subprocess
import sys

import numpy as np
import pytest

from xqml import __version__
from xqml.cli import main
from xqml.dataio import load_csv


def run(tmp_path, *args):
    return main(["--quiet", "--out-dir", str(tmp_path), *args])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert main(["--quiet", "--out-dir", str(d), "synth", "--n", "100", "--dims", "4", "--sep", "8", "--seed", "3"]) == 0
    rc = main(["--quiet", "--out-dir", str(d), "train", "--data", str(d / "synth.csv"), "--n-qubits", "3",
               "--layers", "1", "--encoding", "AngleY", "--epochs", "15", "--lr", "0.05", "--batch-size", "16"])
    assert rc == 0
    return d


def test_synth_writes_requested_rows(tmp_path):
    assert run(tmp_path, "synth", "--n", "1000", "--dims", "26", "--sep", "4", "--seed", "7") == 0
    ds = load_csv(tmp_path / "synth.csv")
    assert len(ds) == 1000 and ds.n_features == 26
    first = (tmp_path / "synth.csv").read_bytes()
    assert run(tmp_path, "synth", "--n", "1000", "--dims", "26", "--sep", "4", "--seed", "7") == 0
    assert (tmp_path / "synth.csv").read_bytes() == first


def test_usage_errors_exit_one(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, "synth", "--dims", "3", "--sep", "1")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, "cost", "--minutes", "5", "--rate", "-96")
    assert exc.value.code == 1
    (tmp_path / "d.csv").write_text("1,0\n2,1\n")
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, "train", "--data", str(tmp_path / "d.csv"), "--phase", "noisy")
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_data_errors_exit_two(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n")
    assert run(tmp_path, "train", "--data", str(tmp_path / "bad.csv")) == 2
    assert run(tmp_path, "train", "--data", str(tmp_path / "missing.csv")) == 2


def test_numerical_failure_exits_three(tmp_path, monkeypatch):
    from xqml import cli
    from xqml.training import TrainingError

    def boom(*a, **k):
        raise TrainingError("loss became nan")

    monkeypatch.setattr(cli, "train", boom)
    (tmp_path / "d.csv").write_text("1,0\n2,1\n")
    assert run(tmp_path, "train", "--data", str(tmp_path / "d.csv")) == 3


def test_train_outputs(trained):
    summary = json.loads((trained / "train_summary.json").read_text())
    assert summary["metrics"]["accuracy"] >= 0.95
    assert summary["version"] == __version__
    assert summary["seeds"] == {"seed": 0}
    assert summary["config"]["epochs"] == 15
    assert (trained / "history.csv").read_text().startswith("epoch,loss,accuracy,seconds\n")


def test_train_rerun_is_byte_identical(trained, tmp_path):
    args = ["train", "--data", str(trained / "synth.csv"), "--n-qubits", "3", "--layers", "1", "--encoding",
            "AngleY", "--epochs", "15", "--lr", "0.05", "--batch-size", "16"]
    assert run(tmp_path, *args) == 0
    assert (tmp_path / "model.json").read_bytes() == (trained / "model.json").read_bytes()
    a = json.loads((tmp_path / "train_summary.json").read_text())
    b = json.loads((trained / "train_summary.json").read_text())
    a["config"].pop("out_dir"), b["config"].pop("out_dir")
    a["model"].pop("path"), b["model"].pop("path")
    assert a == b


def eval_rows(d):
    return json.loads((d / "metrics.json").read_text())["reports"]


def test_eval_zero_noise_matches_noiseless(trained, tmp_path):
    rc = run(tmp_path, "eval", "--model", str(trained / "model.json"), "--data", str(trained / "synth.csv"),
             "--backend", "noiseless", "--backend", "noisy", "--device", "all-to-all")
    assert rc == 0
    a, b = eval_rows(tmp_path)
    assert a["backend"] == "noiseless" and b["backend"] == "noisy:all-to-all"
    for key in ("accuracy", "sureness", "confidence_mean", "confidence_spread"):
        assert abs(a[key] - b[key]) < 1e-9
    assert (a["n0"], a["n1"]) == (b["n0"], b["n1"])
    assert (tmp_path / "metrics.csv").read_text().startswith(
        "backend,accuracy,sureness,confidence_mean,confidence_spread,n0,n1,imbalance,n_samples\n")


def test_eval_flip_labels(trained, tmp_path):
    base = ["eval", "--model", str(trained / "model.json"), "--data", str(trained / "synth.csv")]
    assert run(tmp_path, *base) == 0
    a = eval_rows(tmp_path)[0]
    assert run(tmp_path, *base, "--flip-labels") == 0
    b = eval_rows(tmp_path)[0]
    assert b["accuracy"] == pytest.approx(1 - a["accuracy"], abs=1e-12)
    assert b["sureness"] == a["sureness"]


def test_eval_shots_and_tampered_model(trained, tmp_path):
    base = ["eval", "--data", str(trained / "synth.csv")]
    assert run(tmp_path, *base, "--model", str(trained / "model.json"), "--backend", "noisy", "--device",
               "heavy-hex-127", "--shots", "500") == 0
    assert eval_rows(tmp_path)[0]["backend"] == "noisy:heavy-hex-127@500shots"
    raw = json.loads((trained / "model.json").read_text())
    del raw["quantum_weights"]
    (tmp_path / "bad.json").write_text(json.dumps(raw))
    assert run(tmp_path, *base, "--model", str(tmp_path / "bad.json")) == 2


def test_transpile_default_qnn(tmp_path):
    assert run(tmp_path, "transpile", "--device", "heavy-hex-127") == 0
    payload = json.loads((tmp_path / "transpile.json").read_text())
    meta = payload["metadata"]
    assert list(meta) == ["n_qubits", "depth", "rz", "sx", "ecr", "x"]
    assert meta["n_qubits"] == 8
    first = (tmp_path / "circuit.txt").read_text()
    other = tmp_path / "again"
    assert main(["--quiet", "--out-dir", str(other), "transpile", "--circuit", str(tmp_path / "circuit.txt")]) == 0
    assert (other / "circuit.txt").read_text() == first
    assert json.loads((other / "transpile.json").read_text())["metadata"] == meta


def test_transpile_all_to_all_has_no_swaps(tmp_path):
    assert run(tmp_path, "transpile", "--device", "all-to-all") == 0
    assert json.loads((tmp_path / "transpile.json").read_text())["n_swaps"] == 0


def test_cost_commands(tmp_path):
    assert run(tmp_path, "cost", "--minutes", "851", "--rate", "96") == 0
    assert json.loads((tmp_path / "cost.json").read_text())["cost"]["usd"] == 81696.0
    assert run(tmp_path, "cost", "--samples", "31256", "--per-sample-s", "133", "--rate", "96",
               "--quoted-usd", "6.4e6") == 0
    rep = json.loads((tmp_path / "cost.json").read_text())["cost"]
    assert rep["per_sample"]["usd"] == pytest.approx(6.65e6, rel=1e-3)
    assert rep["note"]


def test_reports_are_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["--quiet", "--out-dir", str(d), "cost", "--minutes", "10", "--rate", "96"]) == 0
    pa = json.loads((a / "cost.json").read_text())
    pb = json.loads((b / "cost.json").read_text())
    pa["config"].pop("out_dir"), pb["config"].pop("out_dir")
    assert pa == pb


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "xqml", "--out-dir", str(tmp_path), "cost", "--minutes", "1",
                          "--rate", "96"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["usd"] == 96.0
