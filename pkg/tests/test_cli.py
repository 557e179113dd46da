import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from neurosoc.cli import main

CONFIGS = Path(__file__).parents[1] / "configs"
TINY = """n_channels = 2
duration_s = 60
n_events = 3
event_len_s = 6, 9
focal_channels = 1
k = 3
epochs = 30
"""


def _rows(path):
    with open(path) as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def tiny_cfg(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "tiny.cfg"
    p.write_text(TINY)
    return p


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, tiny_cfg):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", "--config", str(tiny_cfg), "--out", str(out), "--seed", "4"]) == 0
    return out


def test_train_writes_model(trained_dir):
    assert (trained_dir / "model.ntre").stat().st_size <= 2930
    assert len(_rows(trained_dir / "train_report.csv")) > 1


def test_infer_and_importance(tmp_path, trained_dir, tiny_cfg):
    args = ["--config", str(tiny_cfg), "--out", str(tmp_path), "--seed", "4"]
    assert main(["infer", "--model", str(trained_dir / "model.ntre"), *args]) == 0
    pred = _rows(tmp_path / "predictions.csv")
    assert pred[0] == ["window", "label", "leaf", "features_extracted"] and len(pred) == 61
    assert main(["importance", "--log", str(tmp_path / "inference_log.csv"), *args]) == 0
    imp = _rows(tmp_path / "channel_importance.csv")
    assert imp[0] == ["channel", "importance", "rank"]
    assert float(imp[1][1]) == 1.0


def test_eval_and_shuffle(tmp_path, tiny_cfg):
    for sub, flag in (("real", []), ("shuf", ["--shuffle-labels"])):
        assert main(["eval", "--config", str(tiny_cfg), "--out", str(tmp_path / sub), *flag]) == 0
    for name in ("eval_summary.csv", "confusion.csv", "inference_log.csv"):
        assert (tmp_path / "real" / name).exists()
    assert _rows(tmp_path / "real" / "eval_summary.csv")[-1][0] == "all"


def test_ingest_and_features(tmp_path):
    data = tmp_path / "rec.csv"
    data.write_text("a,b\n" + "".join(f"{i % 7},{-(i % 5)}\n" for i in range(4000)))
    ann = tmp_path / "ann.csv"
    ann.write_text("start_s,end_s,label\n0.5,1.2,seizure\n")
    assert main(["ingest", str(data), "--rate", "2000", "--annotations", str(ann), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "recording.raw16").stat().st_size == 2 * 2 * 4000
    assert main(["features", "--data", str(data), "--rate", "2000", "--annotations", str(ann),
                 "--out", str(tmp_path)]) == 0
    feats = _rows(tmp_path / "features.csv")
    assert len(feats) == 3


def test_reruns_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["sim-stim", "--pulses", "3", "--out", str(tmp_path / d)]) == 0
        assert main(["validate-approx", "--windows", "10", "--out", str(tmp_path / d)]) == 0
    for name in ("stim_trace.csv", "stim_pulses.csv", "approx_correlation.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sim_dsl_random_three_windows(tmp_path):
    assert main(["sim-dsl", "--out", str(tmp_path), "--seed", "1"]) == 0
    rows = _rows(tmp_path / "dsl_report.csv")
    assert len(rows) == 1 + 3 * 64
    assert {r[0] for r in rows[1:]} == {"0", "1", "2"}


def test_sim_dsl_scenario_file(tmp_path):
    assert main(["sim-dsl", "--scenario", str(CONFIGS / "fixed_offsets.cfg"), "--mode", "fine-only",
                 "--out", str(tmp_path)]) == 0
    assert len(_rows(tmp_path / "dsl_report.csv")) == 5


def test_global_flags_either_side(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--seed", "3", "--out", str(a), "sim-stim", "--pulses", "2"]) == 0
    assert main(["sim-stim", "--pulses", "2", "--seed", "3", "--out", str(b)]) == 0
    assert (a / "stim_trace.csv").read_bytes() == (b / "stim_trace.csv").read_bytes()


def test_missing_config(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 1
    e = _err(capsys)
    assert e["type"] == "ConfigError" and "cannot read config" in e["error"]


def test_invalid_stim_command(tmp_path, capsys):
    assert main(["sim-stim", "--amplitude", "900", "--out", str(tmp_path)]) == 1
    assert _err(capsys)["type"] == "StimError"


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 2
    err = capsys.readouterr().err
    assert "usage" in err
    assert json.loads(err.strip().splitlines()[-1])["type"] == "usage"


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "neurosoc.cli", "sim-stim", "--pulses", "1",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0 and "stim_trace.csv" in r.stdout
