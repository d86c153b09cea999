"""
Tests for the command line interface.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import json
from pathlib import Path

import pytest

from dataprove.cli import EXIT_CLEAN, EXIT_ERROR, EXIT_FINDINGS, run_cli
from dataprove.report import load_report

DATA = Path(__file__).parent / "data"
POLICY1 = str(DATA / "example1.policy")
ARCH1 = str(DATA / "example1.arch")


@pytest.fixture(name="write")
def fixture_write(tmp_path):
    def write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write


class TestVerify:
    def test_text_report(self, capsys):
        assert run_cli(["verify", "--policy", POLICY1, "--arch", ARCH1]) == EXIT_FINDINGS
        out = capsys.readouterr().out
        assert out.startswith("policy: example1.policy\n")
        assert out.endswith("2 violations (0 functional, 1 privacy, 1 dpr)\n")

    def test_json_report_to_file(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        status = run_cli(
            ["verify", "--policy", POLICY1, "--arch", ARCH1, "--format", "json", "--out", str(out)]
        )
        assert status == EXIT_FINDINGS
        assert capsys.readouterr().out == ""
        report = load_report(out.read_text(encoding="utf-8"))
        assert report["architecture"] == "example1.arch"
        assert report["summary"]["privacyViolations"] == 1

    def test_clean_run(self, write, capsys):
        policy = write("p.policy", "DATAGROUP name UNIQUE=N { name }\nPOLICY name { HAS { sp } }\n")
        arch = write("a.arch", "RECEIVE(sp,name)\n")
        assert run_cli(["verify", "--policy", policy, "--arch", arch]) == EXIT_CLEAN
        assert capsys.readouterr().out.endswith("0 violations (0 functional, 0 privacy, 0 dpr)\n")

    def test_crypto_depth_option(self, capsys):
        status = run_cli(
            [
                "verify",
                "--policy",
                str(DATA / "example2.policy"),
                "--arch",
                str(DATA / "example2.arch"),
                "--max-crypto-depth",
                "0",
                "--format",
                "json",
            ]
        )
        assert status == EXIT_FINDINGS
        assert json.loads(capsys.readouterr().out)["maxCryptoDepth"] == 0


class TestLint:
    def test_policy_without_conflicts(self, capsys):
        assert run_cli(["lint-policy", "--policy", POLICY1]) == EXIT_CLEAN
        assert capsys.readouterr().out == "example1.policy: no conflicts\n"

    def test_policy_with_conflict(self, write, capsys):
        policy = write(
            "c.policy",
            "DATAGROUP a UNIQUE=N { a }\n"
            "POLICY a {\n"
            "  COLLECTION { consent=Y ; purposes=createat:Account }\n"
            "  HAS { mainstorage }\n"
            "}\n",
        )
        assert run_cli(["lint-policy", "--policy", policy]) == EXIT_FINDINGS
        assert capsys.readouterr().out.startswith("c.policy: conflicts (1):\n")

    def test_policy_against_access_map(self, write, capsys):
        arch = write("access.arch", "STOREAT(mainstorage,personalinfo,Time(t))\nHASACCESSTO(sp,{mainstorage})\n")
        assert run_cli(["lint-policy", "--policy", POLICY1, "--arch", arch]) == EXIT_FINDINGS
        out = capsys.readouterr().out
        assert out.startswith("example1.policy: conflicts (1):\n")
        assert "which sp has access to" in out

    def test_well_formed_architecture(self, capsys):
        assert run_cli(["lint-arch", "--arch", ARCH1]) == EXIT_CLEAN
        assert capsys.readouterr().out == "example1.arch: well-formed\n"

    def test_architecture_violation(self, write, capsys):
        arch = write("bad.arch", "STOREAT(mainstorage,name,Time(t))\n")
        assert run_cli(["lint-arch", "--arch", arch]) == EXIT_FINDINGS
        assert "bad.arch: violations (1):" in capsys.readouterr().out


class TestListings:
    def test_facts(self, capsys):
        status = run_cli(
            [
                "facts",
                "--arch",
                str(DATA / "example2.arch"),
                "--policy",
                str(DATA / "example2.policy"),
            ]
        )
        assert status == EXIT_CLEAN
        out = capsys.readouterr().out
        assert "trivial facts (0):" in out
        assert "unique facts (1):\n  UNIQUE(nhsnumber)" in out

    def test_goals(self, capsys):
        assert run_cli(["goals", "--policy", POLICY1]) == EXIT_CLEAN
        out = capsys.readouterr().out
        assert out.startswith("goals (5):\n")
        assert "notes (2):" in out

    def test_rules(self, capsys):
        assert run_cli(["rules", "--set", "HasUpToRules"]) == EXIT_CLEAN
        assert capsys.readouterr().out.splitlines()[0] == "HasUpToRules (2):"


class TestTraceCheck:
    def test_text(self, capsys):
        status = run_cli(
            ["trace-check", "--policy", POLICY1, "--trace", str(DATA / "example1.trace")]
        )
        assert status == EXIT_FINDINGS
        out = capsys.readouterr().out
        assert "C6 storage places [personalinfo]" in out
        assert "      line 4: storeat(" in out
        assert out.endswith("1 violation(s)\n")

    def test_json_with_state(self, capsys):
        status = run_cli(
            [
                "trace-check",
                "--policy",
                POLICY1,
                "--trace",
                str(DATA / "example1.trace"),
                "--format",
                "json",
                "--state",
            ]
        )
        assert status == EXIT_FINDINGS
        document = json.loads(capsys.readouterr().out)
        assert document["events"] == 4
        assert [v["rule"] for v in document["violations"]] == ["C6"]
        assert document["state"][-1] == "time: 2025.01.21.11:30"

    def test_compliant_trace(self, write):
        trace = write("ok.trace", "sconsentat(2020.01.21.11:15,client,personalinfo)\n")
        assert run_cli(["trace-check", "--policy", POLICY1, "--trace", trace]) == EXIT_CLEAN


class TestErrors:
    def test_missing_file(self, capsys):
        assert run_cli(["verify", "--policy", "missing.policy", "--arch", ARCH1]) == EXIT_ERROR
        assert "missing.policy" in capsys.readouterr().err

    def test_invalid_policy(self, write, capsys):
        policy = write("bad.policy", "POLICY x {\n")
        assert run_cli(["lint-policy", "--policy", policy]) == EXIT_ERROR
        assert capsys.readouterr().err.startswith("error: ")

    def test_invalid_trace(self, write, capsys):
        trace = write("bad.trace", "\ncollectat(2020.01.21.11:20,client)\n")
        assert run_cli(["trace-check", "--policy", POLICY1, "--trace", trace]) == EXIT_ERROR
        assert "line 2" in capsys.readouterr().err

    def test_unknown_command(self):
        assert run_cli(["prove"]) == EXIT_ERROR

    def test_invalid_environment(self, monkeypatch):
        monkeypatch.setenv("DPV_MAX_CRYPTO_DEPTH", "deep")
        assert run_cli(["verify", "--policy", POLICY1, "--arch", ARCH1]) == EXIT_ERROR
