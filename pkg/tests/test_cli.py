"""CLI behavior: the thin client drives the same handlers as the service."""

from __future__ import annotations

import json

import pytest

from throttlescope.cli import main

from conftest import make_record, small_scenario
from throttlescope.ingest import to_json_line
from throttlescope.synth import scenario_to_dict


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def synth_dir(tmp_path, capsys):
    config = tmp_path / "scenario.json"
    config.write_text(json.dumps(scenario_to_dict(small_scenario())))
    out = tmp_path / "synth"
    code, stdout, _ = run_cli(
        capsys, "synth", "--scenario", str(config), "--seed", "3", "--out", str(out)
    )
    assert code == 0
    return out, json.loads(stdout)


def test_synth_writes_corpus(synth_dir):
    out, body = synth_dir
    assert (out / "records.ndjson").exists()
    assert (out / "truth.json").exists()
    assert (out / "prefixes.csv").exists()
    assert body["seed"] == 3


def test_ingest_counts_malformed_and_invalid(tmp_path, capsys):
    lines = [
        to_json_line(make_record()),
        "not json at all",
        to_json_line(make_record(segs_out=0, segs_retrans=0)),
    ]
    corpus = tmp_path / "corpus.ndjson"
    corpus.write_text("\n".join(lines) + "\n")
    code, stdout, _ = run_cli(capsys, "ingest", "--input", str(corpus))
    assert code == 0
    body = json.loads(stdout)
    assert body["total_lines"] == 3
    assert body["malformed"] == 1
    assert body["valid"] == 1
    assert body["rejected"]["TOO_FEW_PACKETS"] == 1
    assert body["rejected"]["MALFORMED"] == 1
    assert "line 2" in body["first_errors"][0]


def test_analyze_on_empty_input_warns_but_succeeds(tmp_path, capsys):
    corpus = tmp_path / "empty.ndjson"
    corpus.write_text("")
    out = tmp_path / "analysis"
    code, stdout, _ = run_cli(
        capsys, "analyze", "--input", str(corpus), "--out", str(out)
    )
    assert code == 0
    body = json.loads(stdout)
    assert body["valid_records"] == 0
    assert body["warnings"]
    # empty series files still written, with headers only
    daily = (out / "series_daily.csv").read_text().splitlines()
    assert len(daily) == 1 and daily[0].startswith("date,")


def test_detect_pipeline_via_cli(synth_dir, tmp_path, capsys):
    out, body = synth_dir
    analysis = tmp_path / "analysis"
    events_file = tmp_path / "dates.txt"
    events_file.write_text("2011-11-20\n# comment\n2011-12-05\n")
    code, stdout, _ = run_cli(
        capsys,
        "detect",
        "--input",
        body["records_path"],
        "--prefix-table",
        body["prefix_table_path"],
        "--out",
        str(analysis),
        "--window",
        "14",
        "--events-file",
        str(events_file),
    )
    assert code == 0
    result = json.loads(stdout)
    assert (analysis / "events.json").exists()
    assert (analysis / "correlation.csv").exists()
    rows = (analysis / "correlation.csv").read_text().splitlines()
    assert len(rows) == 3  # header + two labeled dates
    assert result["flag_count"] > 0


def test_missing_input_fails_with_error_json(tmp_path, capsys):
    code, stdout, stderr = run_cli(
        capsys, "ingest", "--input", str(tmp_path / "missing.ndjson")
    )
    assert code == 1
    assert stdout == ""
    error = json.loads(stderr)
    assert error["error"] == "INPUT_NOT_FOUND"


def test_report_merges_artifacts(synth_dir, tmp_path, capsys):
    out, body = synth_dir
    analysis = tmp_path / "analysis"
    code, _, _ = run_cli(
        capsys,
        "analyze",
        "--input",
        body["records_path"],
        "--prefix-table",
        body["prefix_table_path"],
        "--out",
        str(analysis),
    )
    assert code == 0
    code, stdout, _ = run_cli(capsys, "report", "--artifacts", str(analysis))
    assert code == 0
    summary = json.loads((analysis / "summary.json").read_text())
    assert "daily" in summary["sections"]
    assert summary["sections"]["daily"][0]["client_count"] > 0


def test_bundled_protest_dates_yield_nine_correlation_rows(synth_dir, tmp_path, capsys):
    from importlib import resources

    out, body = synth_dir
    dates_file = tmp_path / "dates.txt"
    dates_file.write_text(
        resources.files("throttlescope.data").joinpath("protest_dates.txt").read_text()
    )
    analysis = tmp_path / "analysis"
    code, stdout, _ = run_cli(
        capsys,
        "detect",
        "--input",
        body["records_path"],
        "--prefix-table",
        body["prefix_table_path"],
        "--out",
        str(analysis),
        "--events-file",
        str(dates_file),
    )
    assert code == 0
    rows = (analysis / "correlation.csv").read_text().splitlines()
    assert len(rows) == 10  # header + nine labeled dates


def test_no_command_prints_help(capsys):
    code, stdout, _ = run_cli(capsys)
    assert code == 0
    assert "usage" in stdout.lower()


class TestRemoteMode:
    class FakeResponse:
        def __init__(self, status_code, payload):
            self.status_code = status_code
            self._payload = payload
            self.text = json.dumps(payload)

        def json(self):
            return self._payload

    def test_posts_request_model_to_server(self, monkeypatch, capsys):
        seen = {}

        def fake_post(url, json=None, timeout=None):
            seen["url"] = url
            seen["json"] = json
            return TestRemoteMode.FakeResponse(200, {"total_lines": 0})

        monkeypatch.setattr("throttlescope.cli.httpx.post", fake_post)
        code, stdout, _ = run_cli(
            capsys,
            "--server",
            "http://analysis-box:8300/",
            "ingest",
            "--input",
            "/data/corpus.ndjson",
        )
        assert code == 0
        assert seen["url"] == "http://analysis-box:8300/v1/ingest"
        assert seen["json"]["input_path"] == "/data/corpus.ndjson"
        assert json.loads(stdout) == {"total_lines": 0}

    def test_server_error_maps_to_nonzero_exit(self, monkeypatch, capsys):
        monkeypatch.setattr(
            "throttlescope.cli.httpx.post",
            lambda url, json=None, timeout=None: TestRemoteMode.FakeResponse(
                404, {"detail": {"error": "INPUT_NOT_FOUND", "detail": "nope"}}
            ),
        )
        code, stdout, stderr = run_cli(
            capsys, "--server", "http://x:1", "ingest", "--input", "/data/x.ndjson"
        )
        assert code == 1 and stdout == ""
        assert json.loads(stderr)["error"] == "HTTP_404"
