"""CLI subcommands against the demo fixtures."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from mutagent.campaign import CampaignConfig, run_campaign
from mutagent.cli import main
from mutagent.conversation import Approach
from mutagent.llm import ChatBackend, Record

from backends import OracleTransport
from conftest import SHIM_DIR


def test_mutate_writes_index_and_diffs(demo_project, tmp_path, capsys):
    out = tmp_path / "mutants"
    code = main(["mutate", "--project", str(demo_project), "--limit", "100", "--seed", "1", "--out", str(out)])
    assert code == 0
    lines = (out / "mutants.jsonl").read_text().splitlines()
    assert len(lines) >= 1
    assert len(list(out.glob("*.diff"))) == len(lines)
    assert "wrote" in capsys.readouterr().out


def test_mutate_limit_zero_gives_empty_index(demo_project, tmp_path):
    out = tmp_path / "mutants"
    assert main(["mutate", "--project", str(demo_project), "--limit", "0", "--seed", "1", "--out", str(out)]) == 0
    assert (out / "mutants.jsonl").read_text() == ""


def test_mutate_bad_path_exits_nonzero(tmp_path, capsys):
    assert main(["mutate", "--project", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 1
    assert "does not exist" in capsys.readouterr().err


def test_unknown_approach_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["run", "--config", "x.toml", "--approach", "telepathy"])
    assert excinfo.value.code == 2


def test_run_missing_config_is_domain_error(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 1
    assert "error:" in capsys.readouterr().err


def test_run_live_without_api_key(tmp_path, demo_project, monkeypatch, capsys):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    config = tmp_path / "c.toml"
    config.write_text(
        f'[campaign]\nproject = "{demo_project}"\nout_dir = "{tmp_path / "out"}"\n'
        '[backend]\nmode = "live"\n'
    )
    assert main(["run", "--config", str(config)]) == 1
    assert "API key" in capsys.readouterr().err


@pytest.fixture(scope="module")
def campaign_artifacts(demo_project, demo_mutants, tmp_path_factory):
    """One recorded oracle campaign to exercise evaluate/report/replay-verify."""
    root = tmp_path_factory.mktemp("cli-campaign")
    out = root / "out"
    store = root / "replay.jsonl"
    config = CampaignConfig(
        project=demo_project,
        out_dir=out,
        approach=Approach.SCIENTIFIC_0SHOT,
        mutant_limit=4,
        sampling_seed=5,
        max_iterations=3,
        flaky_runs=2,
        backend_mode="record",
        store_path=store,
        shim_dir=SHIM_DIR,
    )
    backend = ChatBackend(Record("http://unused", "oracle", store), transport=OracleTransport(demo_mutants))
    report = run_campaign(config, backend=backend)
    return {"out": out, "report": report, "project": demo_project}


def test_run_replays_recorded_campaign(campaign_artifacts, tmp_path, capsys):
    store = campaign_artifacts["out"].parent / "replay.jsonl"
    config = tmp_path / "replay.toml"
    config.write_text(
        "[campaign]\n"
        f'project = "{campaign_artifacts["project"]}"\n'
        f'out_dir = "{tmp_path / "out"}"\n'
        'approach = "scientific-0shot"\n'
        "mutant_limit = 4\n"
        "sampling_seed = 5\n"
        "max_iterations = 3\n"
        "flaky_runs = 2\n"
        "[backend]\n"
        'mode = "replay"\n'
        'model = "oracle"\n'
        f'store = "{store}"\n'
        "[shim]\n"
        f'dir = "{SHIM_DIR}"\n'
    )
    assert main(["run", "--config", str(config)]) == 0
    out = capsys.readouterr().out
    assert "campaign report:" in out
    assert (tmp_path / "out" / "report.json").is_file()
    assert (tmp_path / "out" / "tests").is_dir()  # suite directory layout


def test_evaluate_prints_score_and_matrix(campaign_artifacts, capsys):
    out = campaign_artifacts["out"]
    code = main(
        [
            "evaluate",
            "--suite", str(out / "tests"),
            "--mutants", str(out / "mutants"),
            "--project", str(campaign_artifacts["project"]),
            "--shim-dir", str(SHIM_DIR),
        ]
    )
    captured = capsys.readouterr().out
    assert code == 0
    assert "mutation score:" in captured
    assert "kill matrix" in captured
    assert "branch coverage:" in captured


def test_evaluate_empty_suite_scores_zero(campaign_artifacts, tmp_path, capsys):
    empty = tmp_path / "empty-suite"
    empty.mkdir()
    out = campaign_artifacts["out"]
    code = main(
        [
            "evaluate",
            "--suite", str(empty),
            "--mutants", str(out / "mutants"),
            "--project", str(campaign_artifacts["project"]),
            "--shim-dir", str(SHIM_DIR),
        ]
    )
    assert code == 0
    assert "mutation score: 0.0000" in capsys.readouterr().out


def test_evaluate_missing_inputs_exit_nonzero(tmp_path, capsys):
    assert (
        main(
            [
                "evaluate",
                "--suite", str(tmp_path / "nope"),
                "--mutants", str(tmp_path / "nope2"),
                "--project", str(tmp_path),
            ]
        )
        == 1
    )


def test_report_text_and_json(campaign_artifacts, capsys):
    ledger = campaign_artifacts["out"] / "results.jsonl"
    assert main(["report", "--ledger", str(ledger)]) == 0
    text = capsys.readouterr().out
    assert "campaign report:" in text

    assert main(["report", "--ledger", str(ledger), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["sessions"] == campaign_artifacts["report"].sessions
    assert sum(doc["outcome_counts"].values()) == doc["sessions"]


def test_report_empty_ledger_zero_report(tmp_path, capsys):
    ledger = tmp_path / "empty.jsonl"
    ledger.write_text("")
    assert main(["report", "--ledger", str(ledger), "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["sessions"] == 0


def test_report_all_malformed_exits_nonzero(tmp_path, capsys):
    ledger = tmp_path / "junk.jsonl"
    ledger.write_text("garbage\nmore garbage\n")
    assert main(["report", "--ledger", str(ledger)]) == 1


def test_replay_verify_confirms_kills(campaign_artifacts, capsys):
    out = campaign_artifacts["out"]
    code = main(
        [
            "replay-verify",
            "--ledger", str(out / "results.jsonl"),
            "--mutants", str(out / "mutants"),
            "--project", str(campaign_artifacts["project"]),
            "--shim-dir", str(SHIM_DIR),
        ]
    )
    captured = capsys.readouterr().out
    assert code == 0
    assert "0 broken" in captured


def test_replay_verify_detects_tampered_test(campaign_artifacts, tmp_path, capsys):
    out = campaign_artifacts["out"]
    tampered = tmp_path / "tampered.jsonl"
    lines = []
    for raw in (out / "results.jsonl").read_text().splitlines():
        record = json.loads(raw)
        if record["killing_test"]:
            record["killing_test"] = "assert True\n"  # kills nothing
        lines.append(json.dumps(record))
    tampered.write_text("\n".join(lines) + "\n")
    code = main(
        [
            "replay-verify",
            "--ledger", str(tampered),
            "--mutants", str(out / "mutants"),
            "--project", str(campaign_artifacts["project"]),
            "--shim-dir", str(SHIM_DIR),
        ]
    )
    captured = capsys.readouterr().out
    assert code == 1
    assert "BROKEN" in captured
