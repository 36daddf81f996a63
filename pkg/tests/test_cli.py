import json
import os

import pytest
import yaml

from repcs.cli import main


def write_cfg(tmp_path, **extra):
    cfg = {
        "run_id": "r1",
        "seed": 3,
        "backend": {"kind": "synthetic", "vocab": 20, "t_len": 8},
        "calibration": {"n_clean": 120},
        "detect": {"n_clean": 60, "n_memorised": 60},
        "paths": {"out": str(tmp_path / "runs")},
    }
    for k, v in extra.items():
        cfg[k] = {**cfg.get(k, {}), **v} if isinstance(v, dict) else v
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


@pytest.fixture(autouse=True)
def pinned_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def test_full_pipeline(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["calibrate", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "tau=" in out and "gamma_hat=" in out and "dkw_width=" in out
    run = tmp_path / "runs" / "r1"
    assert (run / "calibration.json").exists() and (run / "calibrate.config.yaml").exists()

    assert main(["detect", "--config", cfg, "--concurrency", "2"]) == 1  # unknown flag is a usage error
    assert main(["detect", "--config", cfg]) == 0
    assert "memorised=" in capsys.readouterr().out
    lines = (run / "records.jsonl").read_text().splitlines()
    assert len(lines) == 120

    assert main(["evaluate", "--config", cfg]) == 0
    rep = json.loads((run / "evaluation" / "evaluation.json").read_text())
    assert rep["roc_auc"] > 0.95
    assert rep["n_scored"] == 120
    assert {"roc_curve.csv", "confusion.csv", "latency.csv", "fpr_at_tpr.csv"} <= set(os.listdir(run / "evaluation"))


def test_calibrate_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["calibrate", "--config", cfg, "--run-id", "a"]) == 0
    assert main(["calibrate", "--config", cfg, "--run-id", "b"]) == 0
    runs = tmp_path / "runs"
    assert (runs / "a" / "calibration.json").read_bytes() == (runs / "b" / "calibration.json").read_bytes()
    assert main(["calibrate", "--config", cfg, "--run-id", "c", "--seed", "4"]) == 0
    assert (runs / "a" / "calibration.json").read_bytes() != (runs / "c" / "calibration.json").read_bytes()


def test_calibrate_quantile(tmp_path):
    cfg = write_cfg(tmp_path, calibration={"n_clean": 500})
    assert main(["calibrate", "--config", cfg]) == 0
    art = json.loads((tmp_path / "runs" / "r1" / "calibration.json").read_text())
    assert art["tau"] == sorted(art["scores"])[24]
    assert art["dkw_width"] == pytest.approx(0.0607, abs=1e-4)


def test_calibrate_rejects_non_clean(tmp_path, fixture_path, capsys):
    cfg = write_cfg(tmp_path, backend={"kind": "replay", "path": fixture_path("replay_3.jsonl")})
    assert main(["calibrate", "--config", cfg]) == 1
    err = capsys.readouterr().err
    assert "b" in err and "c" in err and "offending ids" in err


def test_calibrate_zero_cases(tmp_path, fixture_path):
    cfg = write_cfg(tmp_path, backend={"kind": "replay", "path": fixture_path("replay_empty.jsonl")})
    assert main(["calibrate", "--config", cfg]) == 1


def test_detect_missing_artifact(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["detect", "--config", cfg]) == 1
    assert "not found" in capsys.readouterr().err


def test_detect_refuses_duplicate_run(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["calibrate", "--config", cfg]) == 0
    assert main(["detect", "--config", cfg]) == 0
    before = (tmp_path / "runs" / "r1" / "records.jsonl").read_bytes()
    assert main(["detect", "--config", cfg]) == 1
    assert (tmp_path / "runs" / "r1" / "records.jsonl").read_bytes() == before


def test_detect_with_shared_calibration_and_override(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["calibrate", "--config", cfg]) == 0
    art = str(tmp_path / "runs" / "r1" / "calibration.json")
    assert main(["detect", "--config", cfg, "--run-id", "r2", "--calibration", art, "--tau-override", "0"]) == 0
    recs = [json.loads(l) for l in open(tmp_path / "runs" / "r2" / "records.jsonl")]
    assert all(r["decision"] == "grounded" and r["tau"] == 0.0 for r in recs)


def test_fingerprint_mismatch_needs_force(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["calibrate", "--config", cfg]) == 0
    art = str(tmp_path / "runs" / "r1" / "calibration.json")
    other = write_cfg(tmp_path, backend={"vocab": 21})
    assert main(["detect", "--config", other, "--run-id", "x", "--calibration", art]) == 1
    assert main(["detect", "--config", other, "--run-id", "y", "--calibration", art, "--force"]) == 0


def test_evaluate_single_class(tmp_path, capsys):
    cfg = write_cfg(tmp_path, detect={"n_clean": 10, "n_memorised": 0})
    assert main(["calibrate", "--config", cfg]) == 0
    assert main(["detect", "--config", cfg]) == 0
    assert main(["evaluate", "--config", cfg]) == 1
    assert "positive" in capsys.readouterr().err


def test_evaluate_with_noise_sweep(tmp_path):
    cfg = write_cfg(tmp_path, evaluate={"noise_sigmas": [0.0, 0.05]})
    assert main(["calibrate", "--config", cfg]) == 0
    assert main(["detect", "--config", cfg]) == 0
    assert main(["evaluate", "--config", cfg]) == 0
    assert (tmp_path / "runs" / "r1" / "evaluation" / "noise_sweep.csv").exists()


def test_replay_detect(tmp_path, fixture_path):
    cfg = write_cfg(tmp_path, backend={"kind": "replay", "path": fixture_path("replay_3.jsonl")})
    calib = {"tau": 0.01, "alpha": 0.05, "n": 1, "gamma_hat": 1.0, "dkw_width": 1.0, "epsilon": 0.05, "t_len": 1}
    art = tmp_path / "cal.json"
    art.write_text(json.dumps(calib))
    assert main(["detect", "--config", cfg, "--calibration", str(art)]) == 0
    recs = [json.loads(l) for l in open(tmp_path / "runs" / "r1" / "records.jsonl")]
    assert [r["decision"] for r in recs] == ["grounded", "memorised", "memorised"]


def test_http_transport_failure_exit_code(tmp_path):
    queries = tmp_path / "q.jsonl"
    queries.write_text(json.dumps({"query_id": "c1", "prompt": "Q", "label": "clean"}) + "\n")
    cfg = write_cfg(
        tmp_path,
        backend={
            "kind": "http",
            "endpoint": "http://127.0.0.1:9",
            "model": "m",
            "timeout": 0.5,
            "calibration_queries": str(queries),
        },
    )
    assert main(["calibrate", "--config", cfg]) == 2


def test_simulate(tmp_path, capsys):
    cfg = write_cfg(tmp_path, simulate={"pool_size": 2000, "chunk": 500})
    assert main(["simulate", "gap_histogram", "--config", cfg, "--trials", "300"]) == 0
    run = tmp_path / "runs" / "r1" / "gap_histogram"
    assert (run / "gap_histogram.json").exists() and (run / "gap_histogram.csv").exists()
    assert json.loads((run / "gap_histogram.json").read_text())["config"]["trials"] == 300
    assert (run / "simulate.config.yaml").exists()


def test_simulate_failure_exit_3(tmp_path):
    cfg = write_cfg(tmp_path, simulate={"concentration": 0.2, "eta_grid": [0.3]})
    assert main(["simulate", "collapse", "--config", cfg, "--trials", "200"]) == 3


def test_simulate_unknown(tmp_path, capsys):
    assert main(["simulate", "nope", "--out", str(tmp_path)]) == 1
    assert "collapse" in capsys.readouterr().err


def test_bad_domain(tmp_path):
    cfg = write_cfg(tmp_path, alpha=1.5)
    assert main(["calibrate", "--config", cfg]) == 1
    assert main(["calibrate", "--mode", "bogus"]) == 1
