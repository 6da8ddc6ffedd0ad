import csv
import json

import numpy as np
import pytest
from helpers import run_cli, tree_bytes

from mimo_semalign.cli import main
from mimo_semalign.codec import load_dataset

SMALL_SPEC = {"d": 8, "m": 8, "n": 64, "n_classes": 2, "cluster_spread": 0.1}
TASK_SPEC = {"d": 16, "m": 24, "n": 600, "n_classes": 4, "cluster_spread": 0.5, "map_kind": "real_linear"}


@pytest.fixture
def data(tmp_path):
    out = tmp_path / "data"
    assert run_cli("gen-data", "--out", out, config=TASK_SPEC, tmp=tmp_path) == 0
    return out


def test_gen_data_minimal(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli("gen-data", "--seed", 5, "--out", out, config=SMALL_SPEC, tmp=tmp_path) == 0
    assert tree_bytes(a) == tree_bytes(b)
    ds = load_dataset(a)
    assert (ds.n, ds.d, ds.m, ds.n_classes) == (64, 8, 8, 2)
    assert np.mean(ds.head.predict(ds.rx) == ds.labels) >= 0.95
    resolved = json.loads((a / "resolved_config.json").read_text())
    assert resolved["seed"] == 5 and resolved["dtype"] == "f32le"


@pytest.mark.parametrize("kind", ["linear", "neural"])
def test_train_reproduces_bit_exactly(tmp_path, data, kind, capsys):
    cfg = {"channel": {"K": 1, "n_t": 4, "n_r": 4}, "n_pilots": 400, "neural": {"epochs": 3}}
    if kind == "linear":
        cfg.pop("neural")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("train", "--kind", kind, "--data", data, "--out", a, config=cfg, tmp=tmp_path) == 0
    line = capsys.readouterr().out
    assert "feasible=True" in line and "sparsity=" in line
    # the second run reads back the resolved config written by the first
    assert main(["train", "--out", str(b), "--config", str(a / "resolved_config.json")]) == 0
    assert tree_bytes(a) == tree_bytes(b)
    metrics = json.loads((a / "metrics.json").read_text())
    assert metrics["kind"] == kind


def test_eval_writes_one_row(tmp_path, data):
    model = tmp_path / "model"
    cfg = {"channel": {"K": 1, "n_t": 4, "n_r": 4}, "n_pilots": 400}
    assert run_cli("train", "--data", data, "--out", model, config=cfg, tmp=tmp_path) == 0
    out = tmp_path / "e.csv"
    assert main(["eval", "--model", str(model), "--data", str(data), "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 1 and rows[0]["method"] == "linear"
    assert 0.0 <= float(rows[0]["accuracy"]) <= 1.0
    first = out.read_bytes()
    assert main(["eval", "--model", str(model), "--data", str(data), "--out", str(out)]) == 0
    assert out.read_bytes() == first
    again = tmp_path / "again.csv"
    assert main(["eval", "--out", str(again), "--config", str(tmp_path / "e.config.json")]) == 0
    assert again.read_bytes() == first


def test_sparsity_sweep_row_count(tmp_path, data):
    betas = [0, 10, 20, 30, 40, 50, 60, 70]
    cfg = {
        "methods": ["neural"],
        "sweep": {"kind": "sparsity", "values": betas, "n_t": 2},
        "n_pilots": 400,
        "n_realizations": 2,
        "neural": {"epochs": 2},
    }
    out = tmp_path / "s.csv"
    assert run_cli("sweep", "--data", data, "--out", out, config=cfg, tmp=tmp_path) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == len(betas) * 2
    sparsity = [float(r["sparsity"]) for r in rows]
    assert sparsity[0] == 0.0 and max(sparsity) > 0.0


def test_sweep_threads_identical(tmp_path, data):
    cfg = {"sweep": {"kind": "snr", "values": [0, 20], "n_t": 2}, "n_pilots": 400, "n_realizations": 2}
    one, four = tmp_path / "1.csv", tmp_path / "4.csv"
    assert run_cli("sweep", "--data", data, "--out", one, config=cfg, tmp=tmp_path) == 0
    assert run_cli("sweep", "--threads", 4, "--data", data, "--out", four, config=cfg, tmp=tmp_path) == 0
    assert one.read_bytes() == four.read_bytes()
    again = tmp_path / "again.csv"
    assert main(["sweep", "--out", str(again), "--config", str(tmp_path / "1.config.json")]) == 0
    assert again.read_bytes() == one.read_bytes()


def test_flops_formula_report(tmp_path, capsys):
    out = tmp_path / "f.json"
    assert main(["flops", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "linear: 26868" in text and "neural_formula: 1502208" in text
    assert "ratio: 55.9" in text and "113" in text
    assert run_cli("flops", config={"n_t": 2, "n_r": 2}, tmp=tmp_path) == 0
    assert "linear: 8444" in capsys.readouterr().out
    assert json.loads(out.read_text())["linear"] == 26868


def test_flops_on_trained_model(tmp_path, data, capsys):
    model = tmp_path / "nn"
    cfg = {"channel": {"K": 1, "n_t": 2, "n_r": 2}, "n_pilots": 400, "neural": {"epochs": 2}}
    assert run_cli("train", "--kind", "neural", "--data", data, "--out", model, config=cfg, tmp=tmp_path) == 0
    out = tmp_path / "f.json"
    assert main(["flops", "--model", str(model), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["neural_exact"] <= report["neural_formula"] + 8
    assert report["linear"] == 4 * 2 * 16 + (4 * 2 - 1) * 24 - 2 * 2


@pytest.mark.parametrize(
    "argv, config",
    [
        (["gen-data"], {"d": 7, "m": 8, "n": 10}),
        (["gen-data"], {"bogus": 1}),
        (["sweep", "--data", "DATA"], {"methods": ["magic"]}),
        (["train", "--data", "DATA"], {"admm": {"rho": -1}}),
        (["flops"], {"K": 0}),
    ],
)
def test_config_errors_exit_2(tmp_path, data, argv, config):
    argv = [str(data) if a == "DATA" else a for a in argv]
    assert run_cli(*argv, "--out", tmp_path / "o", config=config, tmp=tmp_path) == 2


def test_missing_config_file_and_bad_flags(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "o"), "--config", str(tmp_path / "none.json")]) == 2
    assert main(["flops", "--threads", "0"]) == 2
    assert main(["nonsense"]) == 2


def test_divergence_exits_3(tmp_path, data):
    cfg = {"channel": {"K": 1, "n_t": 4, "n_r": 4}, "n_pilots": 400, "neural": {"eta": 100.0, "epochs": 3}}
    assert run_cli("train", "--kind", "neural", "--data", data, "--out", tmp_path / "m", config=cfg, tmp=tmp_path) == 3
