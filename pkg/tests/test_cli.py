import json

import numpy as np
import pytest

from lpnet.cli import main, parse_arch, worker_threads
from lpnet.network import LayerSpec


def run_cli(*argv):
    return main(list(argv))


# -- argument plumbing ------------------------------------------------------

def test_parse_arch_forms():
    specs = parse_arch("lp:3:2,linear:8:tanh,maxout:2:4,dropout:0.5")
    kinds = [s.kind for s in specs]
    assert kinds == ["lp", "linear", "maxout", "dropout"]
    assert specs[0].units == 3 and specs[0].group == 2
    assert specs[1].out_dim == 8 and specs[1].activation == "tanh"
    assert specs[3].rate == 0.5


def test_parse_arch_fixed_order():
    (spec,) = parse_arch("lp:2:2:2.0")
    assert spec.learn_order is False and spec.init_order == 2.0


def test_parse_arch_rejects_garbage():
    with pytest.raises(ValueError):
        parse_arch("conv:3:3")
    with pytest.raises(ValueError):
        parse_arch("lp:3")


def test_worker_threads_env(monkeypatch):
    monkeypatch.delenv("LP_UNITS_THREADS", raising=False)
    assert worker_threads() == 1
    monkeypatch.setenv("LP_UNITS_THREADS", "4")
    assert worker_threads() == 4
    monkeypatch.setenv("LP_UNITS_THREADS", "0")
    assert worker_threads() == 1


# -- gen-data ---------------------------------------------------------------

def test_gen_data_curvature_rows(tmp_path, capsys):
    out = tmp_path / "curv.csv"
    assert run_cli("gen-data", "curvature", "--n", "5000", "--seed", "1",
                   "--out", str(out)) == 0
    echo = json.loads(capsys.readouterr().out.splitlines()[0])
    assert echo["resolved_config"]["kind"] == "curvature"
    lines = out.read_text().splitlines()
    assert len(lines) == 5001  # header + rows


def test_gen_data_deterministic(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    run_cli("gen-data", "gauss2", "--seed", "3", "--out", str(a))
    run_cli("gen-data", "gauss2", "--seed", "3", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_gen_data_bad_kind_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("gen-data", "blobs", "--out", str(tmp_path / "x.csv"))
    assert exc.value.code == 2


def test_gen_data_unwritable_path_io_error(capsys):
    assert run_cli("gen-data", "gauss2", "--out",
                   "/nonexistent-dir/x.csv") == 3


def test_gen_data_pianoroll(tmp_path):
    out = tmp_path / "roll.json"
    assert run_cli("gen-data", "pianoroll", "--n", "6", "--length", "20",
                   "--seed", "2", "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == "lpnet-pianoroll/1"
    assert len(doc["sequences"]) == 6


# -- train ------------------------------------------------------------------

def test_train_toy_run_separates_blobs(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code = run_cli("train", "--data", "gauss2", "--arch", "lp:1:2",
                   "--epochs", "40", "--learning-rate", "0.3",
                   "--seed", "0", "--out-dir", str(out_dir))
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text())
    assert report["final"]["train_error"] <= 0.01
    assert report["final"]["valid_error"] <= 0.01
    model = json.loads((out_dir / "model.json").read_text())
    assert model["schema"] == "lpnet-network/1"


def test_train_zero_epochs_init_only(tmp_path):
    out_dir = tmp_path / "run"
    assert run_cli("train", "--data", "gauss2", "--arch", "lp:1:2",
                   "--epochs", "0", "--out-dir", str(out_dir)) == 0
    report = json.loads((out_dir / "report.json").read_text())
    assert len(report["history"]["train_loss"]) == 1


def test_train_rerun_bit_identical(tmp_path):
    args = ("train", "--data", "gauss2", "--arch", "lp:1:2", "--epochs", "5",
            "--learning-rate", "0.2", "--seed", "7")
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    run_cli(*args, "--out-dir", str(d1))
    run_cli(*args, "--out-dir", str(d2))
    assert (d1 / "report.json").read_bytes() == (d2 / "report.json").read_bytes()
    assert (d1 / "model.json").read_bytes() == (d2 / "model.json").read_bytes()


def test_train_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 2, "learning_rate": 0.05,
                               "batch_size": 16}))
    out_dir = tmp_path / "run"
    assert run_cli("train", "--config", str(cfg), "--data", "gauss2",
                   "--arch", "lp:1:2", "--epochs", "3",
                   "--out-dir", str(out_dir)) == 0
    report = json.loads((out_dir / "report.json").read_text())
    assert report["config"]["epochs"] == 3          # flag wins
    assert report["config"]["learning_rate"] == 0.05
    assert report["config"]["batch_size"] == 16


def test_train_config_unknown_field(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 2, "warmup": 10}))
    code = run_cli("train", "--config", str(cfg), "--data", "gauss2",
                   "--arch", "lp:1:2", "--out-dir", str(tmp_path / "r"))
    assert code == 3
    assert "warmup" in capsys.readouterr().err


def test_train_config_wrong_type(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": "many"}))
    code = run_cli("train", "--config", str(cfg), "--data", "gauss2",
                   "--arch", "lp:1:2", "--out-dir", str(tmp_path / "r"))
    assert code == 3
    assert "epochs" in capsys.readouterr().err


def test_train_csv_data_path(tmp_path):
    data = tmp_path / "d.csv"
    run_cli("gen-data", "gauss2", "--n", "200", "--seed", "1",
            "--out", str(data))
    out_dir = tmp_path / "run"
    assert run_cli("train", "--data", str(data), "--arch", "lp:1:2",
                   "--epochs", "2", "--out-dir", str(out_dir)) == 0


def test_train_missing_data_file(tmp_path):
    assert run_cli("train", "--data", str(tmp_path / "nope.csv"),
                   "--arch", "lp:1:2", "--out-dir", str(tmp_path / "r")) == 3


# -- gradcheck --------------------------------------------------------------

def test_gradcheck_default_stack_passes(capsys):
    assert run_cli("gradcheck") == 0
    lines = capsys.readouterr().out.splitlines()
    assert float(lines[-1]) < 1e-4


def test_gradcheck_mutation_fails(capsys):
    assert run_cli("gradcheck", "--mutate", "rho-grad") == 1
    assert float(capsys.readouterr().out.splitlines()[-1]) > 1e-1


def test_gradcheck_zero_layers(capsys):
    assert run_cli("gradcheck", "--layers", "0") == 0
    out = capsys.readouterr().out.splitlines()
    assert float(out[-1]) == 0.0


def test_gradcheck_mixed_arch(capsys):
    assert run_cli("gradcheck", "--arch", "lp:2:2,maxout:2:2,linear:4:tanh",
                   "--seed", "3") == 0


# -- boundary ---------------------------------------------------------------

def _trained_model(tmp_path, fixed=None):
    out_dir = tmp_path / "bmodel"
    arch = "lp:1:2" if fixed is None else f"lp:1:2:{fixed}"
    run_cli("train", "--data", "gauss2", "--arch", arch, "--epochs", "30",
            "--learning-rate", "0.3", "--seed", "0", "--out-dir", str(out_dir))
    return out_dir / "model.json"


def test_boundary_grid_rows(tmp_path):
    model = _trained_model(tmp_path)
    out = tmp_path / "grid.csv"
    assert run_cli("boundary", "--model", str(model), "--nx", "50",
                   "--ny", "40", "--out", str(out)) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 50 * 40
    assert lines[0].startswith("x,y,predicted_label,u_0")


def test_boundary_missing_model(tmp_path):
    assert run_cli("boundary", "--model", str(tmp_path / "no.json"),
                   "--out", str(tmp_path / "g.csv")) == 3


def test_boundary_rerun_identical(tmp_path):
    model = _trained_model(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli("boundary", "--model", str(model), "--nx", "30", "--ny", "30",
            "--out", str(a))
    run_cli("boundary", "--model", str(model), "--nx", "30", "--ny", "30",
            "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_boundary_conic_fit_on_fixed_p2(tmp_path, capsys):
    model = _trained_model(tmp_path, fixed=2.0)
    out = tmp_path / "grid.csv"
    code = run_cli("boundary", "--model", str(model), "--fit-conic",
                   "--nx", "120", "--ny", "120",
                   "--x-range", "-4", "4", "--y-range", "-4", "4",
                   "--out", str(out))
    assert code == 0
    payload = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert payload["residual"] < 1e-2
    assert len(payload["coeffs"]) == 6


# -- orders -----------------------------------------------------------------

def test_orders_text_and_json_agree(tmp_path, capsys):
    out_dir = tmp_path / "run"
    run_cli("train", "--data", "curvature", "--n", "400", "--arch", "lp:3:2",
            "--epochs", "3", "--out-dir", str(out_dir))
    capsys.readouterr()
    json_out = tmp_path / "orders.json"
    assert run_cli("orders", "--report", str(out_dir / "report.json"),
                   "--out", str(json_out)) == 0
    text = capsys.readouterr().out
    doc = json.loads(json_out.read_text())
    assert sum(doc["initial"]["histogram"]["counts"]) == 3
    assert sum(doc["learned"]["histogram"]["counts"]) == 3
    assert "initial" in text and "learned" in text
    assert abs(doc["initial"]["mean"] - 3.0) < 0.5
    assert doc["reference"]["tfd"] == {"mean": 2.04, "std": 0.22}


def test_orders_missing_report(tmp_path):
    assert run_cli("orders", "--report", str(tmp_path / "no.json")) == 3


# -- multi-seed -------------------------------------------------------------

def test_multi_seed_gauss2(tmp_path, capsys):
    out = tmp_path / "rates.json"
    assert run_cli("multi-seed", "--experiment", "gauss2", "--seeds", "3",
                   "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert doc["n_seeds"] == 3
    assert len(doc["outcomes"]) == 3
    assert [o["seed"] for o in doc["outcomes"]] == [0, 1, 2]


def test_multi_seed_thread_fanout_deterministic(tmp_path, monkeypatch):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    monkeypatch.setenv("LP_UNITS_THREADS", "1")
    run_cli("multi-seed", "--experiment", "gauss2", "--seeds", "3",
            "--out", str(a))
    monkeypatch.setenv("LP_UNITS_THREADS", "3")
    run_cli("multi-seed", "--experiment", "gauss2", "--seeds", "3",
            "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


# -- rnn-train --------------------------------------------------------------

def test_rnn_train_synthetic_small(tmp_path, capsys):
    out_dir = tmp_path / "rnn"
    code = run_cli("rnn-train", "--n-seq", "20", "--length", "20",
                   "--epochs", "3", "--out-dir", str(out_dir))
    assert code == 0
    payload = json.loads(capsys.readouterr().out.splitlines()[-2])
    assert payload["max_abs_state"] < 1.0
    assert (out_dir / "report.json").exists()


def test_rnn_train_rerun_identical(tmp_path):
    args = ("rnn-train", "--n-seq", "10", "--length", "15", "--epochs", "2")
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    run_cli(*args, "--out-dir", str(d1))
    run_cli(*args, "--out-dir", str(d2))
    assert (d1 / "report.json").read_bytes() == (d2 / "report.json").read_bytes()


def test_rnn_train_from_pianoroll_file(tmp_path):
    roll = tmp_path / "roll.json"
    run_cli("gen-data", "pianoroll", "--n", "8", "--length", "15",
            "--out", str(roll))
    out_dir = tmp_path / "rnn"
    assert run_cli("rnn-train", "--data", str(roll), "--epochs", "2",
                   "--out-dir", str(out_dir)) == 0
