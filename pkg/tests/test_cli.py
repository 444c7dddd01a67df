from __future__ import annotations

import json

import pytest

from tutorforge.bundled import data_path
from tutorforge.cli import main


def test_author_replay_writes_golden(tmp_path, capsys):
    out = tmp_path / "script.json"
    code = main(["author", "--lesson", str(data_path("lesson_cell_organelles.json")),
                 "--out", str(out), "--provider", "replay"])
    assert code == 0
    assert out.read_bytes() == data_path("script_llm.json").read_bytes()
    assert "3 questions" in capsys.readouterr().out


def test_author_fixture_miss_is_step_labeled(tmp_path, capsys):
    empty_fixtures = tmp_path / "fixtures"
    empty_fixtures.mkdir()
    code = main(["author", "--lesson", str(data_path("lesson_cell_organelles.json")),
                 "--out", str(tmp_path / "x.json"), "--provider", "replay",
                 "--fixtures", str(empty_fixtures)])
    assert code == 1
    assert "step=questions" in capsys.readouterr().err


def test_author_rejects_invalid_lesson(tmp_path, capsys):
    bad = tmp_path / "lesson.json"
    doc = json.loads(data_path("lesson_cell_organelles.json").read_text())
    doc["sections"].append({"heading": "Ghost", "anchor": "not-in-body"})
    bad.write_text(json.dumps(doc))
    code = main(["author", "--lesson", str(bad), "--out", str(tmp_path / "x.json")])
    assert code == 2
    assert "lesson invalid" in capsys.readouterr().err


def test_simulate_then_analyze(tmp_path, capsys):
    data = tmp_path / "data"
    code = main(["simulate", "--policy", "question_driven", "--sessions", "2",
                 "--provider", "replay", "--data", str(data)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.count("condition=ruffle_riley") == 2
    assert "help_request_count=0" in out

    report_file = tmp_path / "report.txt"
    code = main(["analyze", "--records", str(data), "--out", str(report_file)])
    assert code == 0
    report = report_file.read_text()
    assert "Study report" in report
    assert "ruffle_riley" in report
    assert "2" in report


def test_unknown_policy_rejected():
    with pytest.raises(SystemExit):
        main(["simulate", "--policy", "mystery", "--data", "/tmp/x"])
