import csv
import json

import numpy as np
import pytest
from conftest import write_config

from turbokoop import edmd
from turbokoop.cli import main
from turbokoop.dataio import ingest_csv, write_csv


def test_print_schema(capsys):
    assert main(["fit", "--print-schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["type"] == "object" and "dictionary" in schema["properties"]


def test_pipeline_outputs(small_run):
    _, run = small_run
    data = sorted(p.name for p in (run / "data").iterdir())
    assert data == ["steady_test.csv", "train_00.csv", "train_01.csv", "transient_test.csv"]
    for name in ("koopman.tkm", "fit_report.json", "narx_N_t.tkm", "narx_T_tur_out.tkm", "narx_report.json"):
        assert (run / name).is_file(), name
    report = json.loads((run / "fit_report.json").read_text())
    assert report["lifted_dim"] == 22 and report["num_functions"] == 20
    assert report["n_snapshots"] == 2 * 2999
    ev = run / "eval"
    rows = list(csv.DictReader((ev / "metrics.csv").open()))
    # two cycles x two channels x {NARX, EDMD}
    assert len(rows) == 8
    assert {r["method"] for r in rows} == {"NARX", "EDMD (N_RBF = 20)"}
    text = (ev / "metrics.txt").read_text()
    assert "transient_test" in text and "steady_test" in text
    traj = list(csv.DictReader((ev / "trajectory_transient_test.csv").open()))
    assert len(traj) == 3000
    assert {"time_s", "N_t_measured", "N_t_edmd", "N_t_narx"} <= set(traj[0])
    assert traj[0]["N_t_narx"] == "nan" and traj[-1]["N_t_narx"] != "nan"


def test_evaluate_reproduces_fit_residual(small_run, tmp_path):
    cfg, run = small_run
    train = [str(run / "data" / "train_00.csv"), str(run / "data" / "train_01.csv")]
    out = tmp_path / "ev"
    code = main(["evaluate", "--config", str(cfg), "--out-dir", str(out), "--no-narx",
                 "--model", str(run / "koopman.tkm"), "--test", *train])
    assert code == 0
    fit = json.loads((run / "fit_report.json").read_text())["one_step_residual"]
    res = json.loads((out / "eval" / "residuals.json").read_text())["one_step_residual"]
    assert abs(res["combined"] - fit) <= 1e-9 * max(1.0, fit)


def test_sweep(small_run, tmp_path):
    cfg, run = small_run
    data = run / "data"
    code = main(["sweep", "--config", str(cfg), "--out-dir", str(tmp_path),
                 "--train", str(data / "train_00.csv"), str(data / "train_01.csv"),
                 "--test", str(data / "transient_test.csv")])
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "sweep" / "sweep.csv").open()))
    assert sorted({int(r["num_rbf"]) for r in rows}) == [0, 10, 20]
    res = {int(r["num_rbf"]): float(r["one_step_residual"]) for r in rows}
    assert res[0] >= res[10] - 1e-9 >= res[20] - 2e-9
    assert (tmp_path / "sweep" / "rbf_010" / "koopman.tkm").is_file()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dictionary": {"num_functions": -1}}))
    assert main(["fit", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"bogus": 1}))
    assert main(["fit", "--config", str(bad)]) == 2
    bad.write_text("{not json")
    assert main(["fit", "--config", str(bad)]) == 2
    assert main(["fit", "--config", str(tmp_path / "missing.json")]) == 2
    # evaluating before fitting
    cfg = write_config(tmp_path / "c.json", tmp_path / "run")
    assert main(["evaluate", "--config", str(cfg)]) == 2
    assert "error" in capsys.readouterr().err


def test_data_errors_exit_3(small_run, tmp_path):
    cfg, run = small_run
    ds = ingest_csv(run / "data" / "train_00.csv")
    del ds.channels["u_egrv"]
    broken = tmp_path / "broken.csv"
    write_csv(ds, broken)
    assert main(["fit", "--config", str(cfg), "--out-dir", str(tmp_path), "--train", str(broken)]) == 3
    nan = tmp_path / "nan.csv"
    nan.write_text("time_s,N_t\n0,1\n0.01,nan\n")
    assert main(["fit", "--config", str(cfg), "--out-dir", str(tmp_path), "--train", str(nan)]) == 3
    # a path that does not exist is a configuration mistake, not bad data
    assert main(["fit", "--config", str(cfg), "--out-dir", str(tmp_path),
                 "--train", str(tmp_path / "absent.csv")]) == 2


def test_divergence_exit_4(small_run, tmp_path):
    cfg, run = small_run
    model = edmd.load_model(run / "koopman.tkm")
    A = np.eye(model.lifted_dim) * 1e300
    edmd.save_model(edmd.KoopmanModel(A, model.B, model.C, model.dictionary, model.stats,
                                      model.state_names, model.input_names, model.sample_rate),
                    tmp_path / "boom.tkm")
    code = main(["evaluate", "--config", str(cfg), "--out-dir", str(tmp_path), "--no-narx",
                 "--model", str(tmp_path / "boom.tkm"), "--test", str(run / "data" / "steady_test.csv")])
    assert code == 4


def test_cli_flags_override_config(small_run, tmp_path):
    cfg, run = small_run
    code = main(["fit", "--config", str(cfg), "--out-dir", str(tmp_path), "--num-rbf", "5",
                 "--family", "gaussian", "--train", str(run / "data" / "train_00.csv")])
    assert code == 0
    report = json.loads((tmp_path / "fit_report.json").read_text())
    assert report["family"] == "gaussian" and report["num_functions"] == 5


@pytest.mark.parametrize("argv", [["--help"], ["fit", "--help"]])
def test_help(argv, capsys):
    with pytest.raises(SystemExit) as ei:
        main(argv)
    assert ei.value.code == 0
    assert "usage" in capsys.readouterr().out
