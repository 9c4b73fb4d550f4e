import json
import os

import pytest

from psmdetect import InvariantError, cli
from psmdetect.cli import main, read_config

from conftest import EX1_CSV

EX1_FLAGS = ["--actions", EX1_CSV, "--viral-threshold", "2", "--phi", "0.25"]
ROWS = ["random", "threshold-km", "threshold-rel", "threshold-nb", "threshold-wnb", "combo-3",
        "prosel-km", "prosel-rel", "prosel-nb", "prosel-wnb"]
SMALL_SYNTH = ["--n-users", "400", "--n-messages", "100", "--max-size", "150",
               "--viral-threshold", "50"]


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_ingest_ex1_summary(tmp_path, capsys):
    assert main(["ingest", *EX1_FLAGS, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    summary = {line.split()[0]: int(line.split()[1]) for line in out.splitlines()}
    assert (summary["actions"], summary["cascades"], summary["users"]) == (16, 2, 13)
    assert (tmp_path / "cascades.jsonl").exists()
    manifest = json.loads((tmp_path / "ingest.manifest.json").read_text())
    assert EX1_CSV in manifest["inputs"] and manifest["config"]["phi"] == 0.25


def test_missing_file_exit_1(tmp_path, capsys):
    missing = str(tmp_path / "nope.csv")
    assert main(["ingest", "--actions", missing, "--out", str(tmp_path)]) == 1
    assert missing in capsys.readouterr().err


def test_strict_malformed_exit_2(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("u1,m1,1\nu1,m1\n")
    assert main(["ingest", "--actions", str(bad), "--strict", "--out", str(tmp_path)]) == 2
    assert main(["ingest", "--actions", str(bad), "--out", str(tmp_path)]) == 0


def test_bad_parameter_exit_2(tmp_path):
    assert main(["ingest", *EX1_FLAGS[:2], "--phi", "1.5", "--out", str(tmp_path)]) == 2


def test_score_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["score", *EX1_FLAGS, "--prima-facie", "off", "--out", str(d)]) == 0
    assert _read(a / "scores.csv") == _read(b / "scores.csv")
    assert _read(a / "score.manifest.json").replace(b'/a"', b'/b"') == \
        _read(b / "score.manifest.json")


def test_select_and_prosel_and_evaluate(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["score", *EX1_FLAGS, "--prima-facie", "off", "--out", out]) == 0
    scores = str(tmp_path / "scores.csv")
    assert main(["select", "--scores", scores, "--metric", "km", "--threshold", "0.8",
                 "--out", out]) == 0
    picked = [json.loads(l)["user_id"] for l in open(tmp_path / "threshold-km.jsonl")]
    assert sorted(picked) == ["a", "c", "d", "e", "h"]
    assert main(["prosel", "--scores", scores, *EX1_FLAGS, "--metric", "wnb", "--theta", "0.85",
                 "--lambda", "0.05", "--min-score", "0.8", "--out", out]) == 0
    rows = [json.loads(l) for l in open(tmp_path / "prosel-wnb.jsonl")]
    assert {r["user_id"] for r in rows if r["iteration"] == 0} == {"b", "e", "f"}
    labels = tmp_path / "labels.csv"
    labels.write_text("user_id,status\na,inactive\nc,active\nd,inactive\n")
    capsys.readouterr()
    assert main(["evaluate", "--selection", str(tmp_path / "threshold-km.jsonl"),
                 "--labels", str(labels), *EX1_FLAGS, "--out", out]) == 0
    report = (tmp_path / "report.csv").read_text().splitlines()
    assert report[1].startswith("threshold-km,5,1,2,0.666")


def test_evaluate_empty_selection(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    labels = tmp_path / "labels.csv"
    labels.write_text("user_id,status\nx,active\n")
    assert main(["evaluate", "--selection", str(empty), "--labels", str(labels),
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report.csv").read_text().splitlines()[1] == "empty,0,0,0,,,,0"


def test_run_on_synthetic_config(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["run", *SMALL_SYNTH, "--calibration", "quantile", "--out", out]) == 0
    table = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in table[2:]] == ROWS
    for name in ROWS:
        assert (tmp_path / "selections" / f"{name}.jsonl").exists()
    first = _read(tmp_path / "report.csv")
    assert main(["run", *SMALL_SYNTH, "--calibration", "quantile", "--out", out]) == 0
    assert _read(tmp_path / "report.csv") == first


def test_config_file_and_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# comment\nphi = 0.25\nviral-threshold = 2\nprima_facie = off\n"
                    f"actions = {EX1_CSV}\n")
    cfg = read_config(str(conf))
    assert cfg["phi"] == 0.25 and cfg["prima_facie"] is False
    args = cli._parser().parse_args(["score", "--config", str(conf), "--phi", "0.5"])
    resolved = cli.resolve_settings(args)
    assert resolved["phi"] == 0.5 and resolved["viral_threshold"] == 2
    assert resolved["seed"] == 42
    bad = tmp_path / "bad.conf"
    bad.write_text("bogus = 1\n")
    assert main(["score", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_generate_writes_log_labels_manifest(tmp_path):
    assert main(["generate", *SMALL_SYNTH, "--format", "jsonl", "--seed", "3",
                 "--out", str(tmp_path)]) == 0
    for name in ("actions.jsonl", "labels.csv", "synth.json", "generate.manifest.json"):
        assert (tmp_path / name).exists()
    assert json.loads((tmp_path / "synth.json").read_text())["config"]["seed"] == 3
    assert main(["generate", "--phi", "0.5", "--synth-phi", "0.9", "--out", str(tmp_path)]) == 2


def test_schema_stamp_mismatch(tmp_path):
    out = str(tmp_path)
    assert main(["score", *EX1_FLAGS, "--out", out]) == 0
    path = tmp_path / "score.manifest.json"
    doc = json.loads(path.read_text())
    doc["schema"] = 99
    path.write_text(json.dumps(doc))
    assert main(["select", "--scores", str(tmp_path / "scores.csv"), "--out", out]) == 2


def test_invariant_violation_exit_3(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise InvariantError("forced")
    monkeypatch.setattr(cli, "check_prosel", broken)
    out = str(tmp_path)
    assert main(["score", *EX1_FLAGS, "--prima-facie", "off", "--out", out]) == 0
    assert main(["prosel", "--scores", str(tmp_path / "scores.csv"), *EX1_FLAGS,
                 "--out", out]) == 3


def test_no_temp_files_left(tmp_path):
    assert main(["score", *EX1_FLAGS, "--out", str(tmp_path)]) == 0
    assert not [n for n in os.listdir(tmp_path) if n.endswith(".tmp")]


def test_help_mentions_precedence(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "flags > --config file > defaults" in capsys.readouterr().out
