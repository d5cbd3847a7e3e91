"""Tests for the command-line entry point."""

import csv
import json

import pytest

from app.cli.commands.audit import holds_from
from app.main import build_parser, main


def test_cf_report(tmp_path):
    """Test the cf command writes the convergent table."""
    out = tmp_path / "cf.json"
    assert main(["cf", "--set", "cf_depth=6", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert len(report["convergents"]) == 7
    assert report["convergents"][6]["q"] == "13"
    assert len(report["config_hash"]) == 64


def test_config_errors_exit_with_two(tmp_path):
    """Test that invalid configuration maps to exit code 2."""
    out = str(tmp_path / "cf.json")
    assert main(["cf", "--set", "lambda=abc", "--out", out]) == 2
    assert main(["cf", "--config", str(tmp_path / "missing.env"), "--out", out]) == 2


def test_config_file(tmp_path, run_config_file):
    """Test the cf command with a config file."""
    path = run_config_file("frequency=silver\ncf_depth=3\n")
    out = tmp_path / "cf.json"
    assert main(["cf", "-c", str(path), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert [row["q"] for row in report["convergents"]] == ["1", "2", "5", "12"]


def test_spectrum_command(tmp_path):
    """Test the spectrum command on a small truncation."""
    out = tmp_path / "spectrum.json"
    args = ["spectrum", "--set", "spectrum_N=10", "--set", "theta_points=3", "--set", "workers=1", "--out", str(out)]
    assert main(args) == 0
    report = json.loads(out.read_text())
    assert report["N"] == 10
    assert report["energies"] == sorted(report["energies"])


def test_lyapunov_csv(tmp_path):
    """Test the lyapunov sweep CSV with provenance columns."""
    out = tmp_path / "lyapunov.csv"
    args = [
        "lyapunov",
        "--set",
        "energy_steps=3",
        "--set",
        "transfer_length=50",
        "--set",
        "phase_samples=4",
        "--out",
        str(out),
    ]
    assert main(args) == 0
    with open(out) as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 3
    assert {"energy", "estimate", "config_hash", "schema_version"} <= set(rows[0])
    assert float(rows[0]["energy"]) == -3.0


def test_audit_stream_and_summary(tmp_path):
    """Test the audit JSON-lines stream and its summary."""
    out = tmp_path / "audit.jsonl"
    args = ["audit", "numerator", "--set", "scales=5", "--set", "spectrum_N=20", "--out", str(out)]
    assert main(args) == 0
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(records) == 9
    assert all(r["lemma"] == "numerator" for r in records)

    with open(tmp_path / "audit_numerator_summary.csv") as handle:
        summary = list(csv.DictReader(handle))
    assert len(summary) == 1
    assert summary[0]["records"] == "9"
    assert summary[0]["holds_from_n"] == "5"


def test_unknown_audit_rejected():
    """Test that audit names are validated by the parser."""
    with pytest.raises(SystemExit):
        build_parser().parse_args(["audit", "no_such_audit"])


def test_holds_from_scale():
    """Test the least scale from which an audit holds."""
    assert holds_from({8: False, 10: True, 12: True}) == 10
    assert holds_from({8: True, 10: False}) is None
    assert holds_from({}) is None


SMALL_LOCALIZE = ["--set", "N=60", "--set", "states=2", "--set", "scales=5", "--set", "workers=1"]


def test_klem2_audit_on_localized_states(tmp_path):
    """Test that klem2 runs on the re-centered states and drops flagged samples."""
    out = tmp_path / "klem2.jsonl"
    assert main(["audit", "klem2", *SMALL_LOCALIZE, "--out", str(out)]) == 0
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert all(r["flags"] == [] for r in records)
    assert {r["params"]["state"] for r in records} <= {0, 1}
    assert {r["params"]["x"] for r in records} <= {0, 1, 2}

    with open(tmp_path / "audit_klem2_summary.csv") as handle:
        summary = list(csv.DictReader(handle))
    assert len(summary) == 1
    row = summary[0]
    discarded = int(row["discarded"])
    assert int(row["records"]) == len(records)
    assert len(records) + discarded == 18
    assert float(row["discard_rate"]) == pytest.approx(discarded / 18, abs=1e-6)


def test_localize_report_and_eigenfunctions(tmp_path):
    """Test the localize command writes its report and one CSV per state."""
    out = tmp_path / "localize_report.json"
    assert main(["localize", *SMALL_LOCALIZE, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["certificate_enabled"] is True
    assert report["summary"]["states"] == 2
    assert [s["index"] for s in report["states"]] == [0, 1]
    assert report["params"]["N"] == 60
    assert len(report["config_hash"]) == 64

    for index in (0, 1):
        with open(tmp_path / f"eigenfunction_{index}.csv") as handle:
            rows = list(csv.DictReader(handle))
        assert {"site", "amplitude_sign", "amplitude_log", "config_hash"} <= set(rows[0])
        origin = [r for r in rows if int(r["site"]) == 0]
        assert len(origin) == 1
        assert int(float(origin[0]["amplitude_sign"])) == 1
        assert float(origin[0]["amplitude_log"]) == pytest.approx(0.0, abs=1e-9)


def test_same_config_gives_identical_bytes(tmp_path):
    """Test that repeating a run with the same configuration reproduces its outputs byte for byte."""
    first, second = tmp_path / "first", tmp_path / "second"
    first.mkdir()
    second.mkdir()
    for target in (first, second):
        assert main(["localize", *SMALL_LOCALIZE, "--out", str(target / "localize_report.json")]) == 0
        assert main(["cf", "--set", "cf_depth=8", "--out", str(target / "cf.json")]) == 0
    for name in ("localize_report.json", "eigenfunction_0.csv", "eigenfunction_1.csv", "cf.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_random_phases_follow_seed(tmp_path):
    """Test that seeded random phase sampling is reproducible and seed-dependent."""
    base = ["lyapunov", "--set", "energy_steps=3", "--set", "transfer_length=50", "--set", "phase_samples=4"]
    base += ["--set", "phase_sampling=random"]

    def estimates(seed: int, name: str):
        out = tmp_path / name
        assert main([*base, "--set", f"seed={seed}", "--out", str(out)]) == 0
        with open(out) as handle:
            return out.read_bytes(), [row["estimate"] for row in csv.DictReader(handle)]

    first, first_rows = estimates(1, "a.csv")
    again, _ = estimates(1, "b.csv")
    _, other_rows = estimates(2, "c.csv")
    assert first == again
    assert first_rows != other_rows
