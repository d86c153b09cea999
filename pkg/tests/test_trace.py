"""
Tests for trace parsing, run-time semantics and trace compliance.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import logging
from functools import reduce
from pathlib import Path

import pytest

from dataprove.definitions import ArchEventKind, ComplianceRule, PolicyEventKind, SpecialKind
from dataprove.errors import TraceSyntaxError
from dataprove.policy import parse_policy
from dataprove.terms import Compound, SimpleType, TimeValue
from dataprove.trace import (
    CONSENT_GIVEN,
    GlobalState,
    PolicyEvent,
    ServiceState,
    Slot,
    Timestamp,
    apply_policy_event,
    check_trace_compliance,
    evaluate,
    parse_arch_trace,
    parse_trace,
    render_trace,
    run_arch_trace,
    run_trace,
)

DATA = Path(__file__).parent / "data"

POLICY = """
ENTITY insurance "Insurance company"
DATAGROUP personalinfo UNIQUE=N { name address }
POLICY personalinfo {
  COLLECTION { consent=Y ; purposes=createat:Account, calculateat:Score }
  USAGE { consent=Y ; purposes=createat:Account, calculateat:Score, calculateat:Profile }
  STORAGE { consent=Y ; where=mainstorage }
  DELETION { fromwhere=mainstorage ; delay=1y }
  TRANSFER { consent=Y ; to=insurance ; purposes=createat:Account }
}
"""


def _trace(*events: str) -> str:
    """Trace source with one minute between consecutive events."""
    lines = []
    for minute, event in enumerate(events):
        name, args = event.split("(", 1)
        lines.append(f"{name}(2020.01.21.11:{minute:02d},{args}")
    return "\n".join(lines) + "\n"


def _rules(source: str) -> list[str]:
    violations = check_trace_compliance(parse_trace(source), parse_policy(POLICY))
    return [v.rule.value for v in violations]


SP_SLOT = Slot("personalinfo", "client")


class TestTimestamp:
    def test_order(self):
        first = Timestamp.parse("2020.01.21.11:15")
        later = Timestamp.parse("2020.01.21.11:20")
        assert later.minutes - first.minutes == 5
        assert Timestamp.parse("t_all") < first
        assert str(first) == "2020.01.21.11:15"

    @pytest.mark.parametrize("text", ["2020-01-21 11:15", "2020.13.21.11:15", "yesterday"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            Timestamp.parse(text)


class TestParse:
    def test_example(self):
        events = parse_trace((DATA / "example1.trace").read_text())
        assert [e.kind for e in events] == [
            PolicyEventKind.SCONSENTAT,
            PolicyEventKind.STOREAT,
            PolicyEventKind.STOREAT,
            PolicyEventKind.DELETEAT,
        ]
        assert events[1].place == "mainstorage"
        assert events[1].value == "Peter"
        assert events[0].line == 2

    def test_forwarding_fields(self):
        event = parse_trace("forwardat(2020.01.21.11:30,insurance,client,personalinfo,Peter)")[0]
        assert event.recipient == "insurance"
        assert event.origin == "client"
        assert event.datum == ("client", "personalinfo", "Peter")

    def test_quoted_values(self):
        source = 'collectat(2020.01.21.11:20,client,personalinfo,"Peter, Smith")\n'
        events = parse_trace(source)
        assert events[0].value == "Peter, Smith"
        assert render_trace(events) == source

    def test_render_round_trip(self):
        events = parse_trace((DATA / "example1.trace").read_text())
        assert parse_trace(render_trace(events)) == events

    @pytest.mark.parametrize(
        "line,message",
        [
            ("collectat(2020.01.21.11:20,client,personalinfo)", "takes 3 arguments"),
            ("fetchat(2020.01.21.11:20,client,personalinfo)", "unknown event"),
            ("collectat(t_all,client,personalinfo,Peter)", "concrete time"),
            ("collectat(2020.02.30.11:20,client,personalinfo,Peter)", "invalid time"),
            ("collectat(2020.01.21.11:20 client)", "cannot parse"),
            ("collectat(2020.01.21.11:20,client,Account(name),Peter)", "name or value"),
        ],
    )
    def test_rejected(self, line, message):
        with pytest.raises(TraceSyntaxError, match=message):
            parse_trace(line)

    def test_error_line_number(self):
        with pytest.raises(TraceSyntaxError) as ex:
            parse_trace("# header\nsconsentat(2020.01.21.11:15,client,personalinfo)\n\nbroken(")
        assert ex.value.line == 4

    def test_event_schema(self):
        stamp = Timestamp.parse("2020.01.21.11:20")
        with pytest.raises(ValueError, match="needs value"):
            PolicyEvent(PolicyEventKind.COLLECTAT, stamp, "client", "personalinfo")
        with pytest.raises(ValueError, match="takes no place"):
            PolicyEvent(PolicyEventKind.CCONSENTAT, stamp, "client", "personalinfo", place="x")


class TestArchParse:
    def test_events(self):
        events = parse_arch_trace(
            "own(t_all,appOfTom,disease,coronavirus)\n"
            "createat(2020.03.01.10:00,appOfTom,report,Report(id,Senc(disease,key)))\n"
            "receiveat(2020.03.01.10:01,sp,Cconsent(name),client,given)\n"
            "deletewithin(2020.03.01.10:02,server,report,appOfTom,x,1y)\n"
        )
        assert events[0].kind is ArchEventKind.OWN
        assert events[0].slot == Slot("disease", "appOfTom")
        assert isinstance(events[1].term, Compound)
        assert events[2].consent is SpecialKind.CCONSENT
        assert events[2].slot == Slot("name", "client", SpecialKind.CCONSENT)
        assert events[3].delay == TimeValue.parse("1y")

    @pytest.mark.parametrize(
        "line,message",
        [
            ("own(t_all,sp,Cconsent(name),x)", "unexpected data"),
            ("deletewithin(t_all,sp,name,client,x,5x)", "invalid delay"),
            ("createat(t_all,sp,account,account(name))", "cannot take arguments"),
            ("createat(t_all,sp,account,Senc(name))", "takes 2 argument"),
            ("createat(t_all,sp,account,Name)", "not a data type name"),
        ],
    )
    def test_rejected(self, line, message):
        with pytest.raises(TraceSyntaxError, match=message):
            parse_arch_trace(line)


class TestServiceSemantics:
    def _apply(self, *events: str) -> ServiceState:
        return run_trace(parse_trace(_trace(*events)))

    def test_collection(self):
        state = self._apply("cconsentat(client,personalinfo)", "collectat(client,personalinfo,Peter)")
        assert state.value("sp", SP_SLOT) == "Peter"
        assert state.value("sp", Slot("personalinfo", "client", SpecialKind.CCONSENT)) == CONSENT_GIVEN
        assert str(state.time) == "2020.01.21.11:01"

    def test_use_records_derived_data(self):
        state = self._apply("createat(client,account,personalinfo,Acc1)")
        assert state.value("sp", Slot("account", "client")) == "Acc1"

    def test_storage_and_forwarding(self):
        state = self._apply(
            "storeat(client,personalinfo,Peter,mainstorage)",
            "forwardat(insurance,client,personalinfo,Peter)",
        )
        assert state.value("mainstorage", SP_SLOT) == "Peter"
        assert state.value("insurance", SP_SLOT) == "Peter"
        assert state.value("sp", SP_SLOT) is None

    def test_deletion_clears_data_and_consents(self):
        state = self._apply(
            "sconsentat(client,personalinfo)",
            "collectat(client,personalinfo,Peter)",
            "storeat(client,personalinfo,Peter,mainstorage)",
            "deleteat(client,personalinfo,Peter,mainstorage)",
        )
        assert state.local("mainstorage") == {}
        assert state.value("sp", Slot("personalinfo", "client", SpecialKind.SCONSENT)) is None
        # the collection record of the provider stays
        assert state.value("sp", SP_SLOT) == "Peter"

    def test_updates_leave_the_original_state(self):
        event = parse_trace(_trace("collectat(client,personalinfo,Peter)"))[0]
        initial = ServiceState()
        apply_policy_event(event, initial)
        assert initial.entities == {}
        assert initial.time is None

    def test_empty_trace(self):
        state = ServiceState()
        assert run_trace([], state) is state

    def test_fold(self):
        events = parse_trace(
            _trace(
                "cconsentat(client,personalinfo)",
                "collectat(client,personalinfo,Peter)",
                "storeat(client,personalinfo,Peter,backupstorage)",
                "deleteat(client,personalinfo,Peter,backupstorage)",
                "collectat(client,personalinfo,Paul)",
            )
        )
        folded = reduce(lambda s, e: apply_policy_event(e, s), events, ServiceState())
        assert run_trace(events) == folded
        assert run_trace(events[2:], run_trace(events[:2])) == folded
        assert folded.value("sp", SP_SLOT) == "Paul"

    def test_render(self):
        state = self._apply("collectat(client,personalinfo,Peter)")
        assert state.render() == "sp: (personalinfo,client) = Peter\ntime: 2020.01.21.11:00\n"
        assert ServiceState().render() == "time: undefined\n"


class TestArchSemantics:
    NARRATIVE = (
        "own(t_all,appOfTom,disease,coronavirus)\n"
        "own(t_all,appOfTom,id,12345)\n"
        "createat(2020.03.01.10:00,appOfTom,report,Report(id,disease))\n"
        'receiveat(2020.03.01.10:05,server,report,appOfTom,"Report(12345,coronavirus)")\n'
        "own(2020.03.02.10:00,appOfTom,disease,influenza)\n"
        "createat(2020.03.02.10:05,appOfTom,report,Report(id,disease))\n"
    )

    def test_narrative(self):
        events = parse_arch_trace(self.NARRATIVE)
        after_first_report = run_arch_trace(events[:4])
        assert after_first_report.value("appOfTom", Slot("report", "appOfTom")) == (
            "Report(12345,coronavirus)"
        )
        assert after_first_report.value("server", Slot("report", "appOfTom")) == (
            "Report(12345,coronavirus)"
        )

        final = run_arch_trace(events)
        assert final.value("appOfTom", Slot("disease", "appOfTom")) == "influenza"
        assert final.value("appOfTom", Slot("report", "appOfTom")) == "Report(12345,influenza)"
        # the server keeps what it received
        assert final.value("server", Slot("report", "appOfTom")) == "Report(12345,coronavirus)"
        assert str(final.time) == "2020.03.02.10:05"

    def test_fold(self):
        events = parse_arch_trace(self.NARRATIVE)
        assert run_arch_trace(events) == run_arch_trace(events[3:], run_arch_trace(events[:3]))

    def test_undefined_payload(self):
        events = parse_arch_trace(
            "own(t_all,sp,name,Peter)\ncreateat(2020.03.01.10:00,sp,profile,Profile(name,age))\n"
        )
        state = run_arch_trace(events)
        assert state.value("sp", Slot("profile", "sp")) is None

    def test_deletion(self):
        events = parse_arch_trace(
            'receiveat(2020.03.01.10:05,server,report,appOfTom,"Report(1,flu)")\n'
            "receiveat(2020.03.01.10:06,server,Sconsent(report),appOfTom,given)\n"
            "deletewithin(2020.03.01.10:07,server,report,appOfTom,x,1y)\n"
        )
        assert run_arch_trace(events).local("server") == {}

    def test_evaluate(self):
        local = {Slot("name", "a"): "Peter", Slot("name", "b"): "Paul", Slot("key", "sp"): "k1"}
        assert evaluate(SimpleType("name"), local) == "Paul"
        assert evaluate(Compound("Account", (SimpleType("name"),)), local) == "Account(Paul)"
        assert evaluate(SimpleType("age"), local) is None
        assert GlobalState().local("sp") == {}


_CASES = [
    ("C1", _trace("cconsentat(client,personalinfo)", "collectat(client,personalinfo,Peter)"), []),
    ("C1", _trace("collectat(client,personalinfo,Peter)"), ["C1"]),
    (
        "C2",
        _trace(
            "cconsentat(client,personalinfo)",
            "collectat(client,personalinfo,Peter)",
            "uconsentat(client,personalinfo)",
            "createat(client,account,personalinfo,Peter)",
        ),
        [],
    ),
    (
        "C2",
        _trace(
            "cconsentat(client,personalinfo)",
            "collectat(client,personalinfo,Peter)",
            "uconsentat(client,personalinfo)",
            "calculateat(client,profile,personalinfo,Peter)",
        ),
        ["C2"],
    ),
    (
        "C3",
        _trace("uconsentat(client,personalinfo)", "calculateat(client,score,personalinfo,Peter)"),
        [],
    ),
    ("C3", _trace("calculateat(client,score,personalinfo,Peter)"), ["C3"]),
    (
        "C4",
        _trace("uconsentat(client,personalinfo)", "createat(client,account,personalinfo,Peter)"),
        [],
    ),
    (
        "C4",
        _trace("uconsentat(client,personalinfo)", "calculateat(client,rating,personalinfo,Peter)"),
        ["C4"],
    ),
    (
        "C5",
        _trace("sconsentat(client,personalinfo)", "storeat(client,personalinfo,Peter,mainstorage)"),
        [],
    ),
    ("C5", _trace("storeat(client,personalinfo,Peter,mainstorage)"), ["C5"]),
    (
        "C6",
        _trace(
            "sconsentat(client,personalinfo)",
            "storeat(client,personalinfo,Peter,mainstorage)",
            "storeat(client,personalinfo,Peter,mainstorage)",
        ),
        [],
    ),
    (
        "C6",
        _trace("sconsentat(client,personalinfo)", "storeat(client,personalinfo,Peter,backupstorage)"),
        ["C6"],
    ),
    (
        "C7",
        _trace(
            "sconsentat(client,personalinfo)",
            "storeat(client,personalinfo,Peter,mainstorage)",
            "deleteat(client,personalinfo,Peter,mainstorage)",
        ),
        [],
    ),
    (
        "C7",
        _trace(
            "sconsentat(client,personalinfo)",
            "storeat(client,personalinfo,Peter,mainstorage)",
            "deleteat(client,personalinfo,Peter,backupstorage)",
        ),
        ["C7"],
    ),
    (
        "C8",
        "cconsentat(2020.01.21.11:15,client,personalinfo)\n"
        "collectat(2020.01.21.11:20,client,personalinfo,Peter)\n"
        "deleteat(2020.06.01.00:00,client,personalinfo,Peter,mainstorage)\n",
        [],
    ),
    (
        "C8",
        "cconsentat(2020.01.21.11:15,client,personalinfo)\n"
        "collectat(2020.01.21.11:20,client,personalinfo,Peter)\n"
        "deleteat(2022.01.21.11:20,client,personalinfo,Peter,mainstorage)\n",
        ["C8"],
    ),
    (
        "C9",
        _trace(
            "fwconsentat(insurance,client,personalinfo)",
            "forwardat(insurance,client,personalinfo,Peter)",
        ),
        [],
    ),
    ("C9", _trace("forwardat(insurance,client,personalinfo,Peter)"), ["C9"]),
    (
        "C10",
        _trace(
            "fwconsentat(insurance,client,personalinfo)",
            "forwardat(insurance,client,personalinfo,Peter)",
        ),
        [],
    ),
    (
        "C10",
        _trace("fwconsentat(bank,client,personalinfo)", "forwardat(bank,client,personalinfo,Peter)"),
        ["C10"],
    ),
    (
        "C11",
        _trace(
            "fwconsentat(insurance,client,personalinfo)",
            "forwardat(insurance,client,personalinfo,Peter)",
            "uconsentat(client,personalinfo)",
            "createat(client,account,personalinfo,Peter)",
        ),
        [],
    ),
    (
        "C11",
        _trace(
            "fwconsentat(insurance,client,personalinfo)",
            "forwardat(insurance,client,personalinfo,Peter)",
            "uconsentat(client,personalinfo)",
            "calculateat(client,score,personalinfo,Peter)",
        ),
        ["C11"],
    ),
]


@pytest.mark.parametrize(
    "rule,source,expected",
    _CASES,
    ids=[f"{rule}-{'violated' if expected else 'satisfied'}" for rule, _, expected in _CASES],
)
def test_compliance_rules(rule, source, expected):
    assert _rules(source) == expected


class TestCompliance:
    def test_example(self):
        policy = parse_policy((DATA / "example1.policy").read_text())
        violations = check_trace_compliance(
            parse_trace((DATA / "example1.trace").read_text()), policy
        )
        assert len(violations) == 1
        violation = violations[0]
        assert violation.rule is ComplianceRule.STORAGE_PLACES
        assert str(violation) == (
            "C6 storage places [personalinfo]: stored at backupstorage, allowed: mainstorage"
        )
        assert violation.to_dict() == {
            "rule": "C6",
            "title": "storage places",
            "dataType": "personalinfo",
            "detail": "stored at backupstorage, allowed: mainstorage",
            "events": ["storeat(2020.01.21.11:22,client,personalinfo,Peter,backupstorage)"],
            "lines": [4],
        }

    def test_deletion_ends_consent(self):
        source = _trace(
            "sconsentat(client,personalinfo)",
            "storeat(client,personalinfo,Peter,mainstorage)",
            "deleteat(client,personalinfo,Peter,mainstorage)",
            "storeat(client,personalinfo,Peter,mainstorage)",
        )
        assert _rules(source) == ["C5"]

    def test_deletion_delay_detail(self):
        violations = check_trace_compliance(
            parse_trace(
                "collectat(2020.01.21.11:20,client,personalinfo,Peter)\n"
                "deleteat(2021.07.21.11:20,client,personalinfo,Peter,mainstorage)\n"
            ),
            parse_policy(POLICY),
        )
        deletion = [v for v in violations if v.rule is ComplianceRule.DELETION_DELAY][0]
        assert deletion.detail == "deleted from mainstorage 1y+6mo+2d after collection, allowed: 1y"
        assert [e.line for e in deletion.events] == [1, 2]

    @pytest.mark.parametrize(
        "action,consent",
        [
            ("collectat(2020.01.21.11:20,client,personalinfo,Peter)", "cconsentat"),
            ("calculateat(2020.01.21.11:20,client,score,personalinfo,Peter)", "uconsentat"),
            ("storeat(2020.01.21.11:20,client,personalinfo,Peter,mainstorage)", "sconsentat"),
            ("forwardat(2020.01.21.11:20,insurance,client,personalinfo,Peter)", "fwconsentat"),
        ],
    )
    def test_consent_at_the_same_time(self, action, consent, caplog):
        args = "insurance,client,personalinfo" if consent == "fwconsentat" else "client,personalinfo"
        source = f"{action}\n{consent}(2020.01.21.11:20,{args})\n"
        with caplog.at_level(logging.WARNING):
            assert _rules(source) == []
        assert "not in time order" not in caplog.text

    def test_consent_a_minute_late(self):
        source = (
            "collectat(2020.01.21.11:20,client,personalinfo,Peter)\n"
            "cconsentat(2020.01.21.11:21,client,personalinfo)\n"
        )
        assert _rules(source) == ["C1"]

    def test_unsorted_trace(self, caplog):
        source = (
            "storeat(2020.01.21.11:21,client,personalinfo,Peter,mainstorage)\n"
            "sconsentat(2020.01.21.11:15,client,personalinfo)\n"
        )
        with caplog.at_level(logging.WARNING):
            assert _rules(source) == []
        assert "not in time order" in caplog.text

    def test_data_type_without_policy(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert _rules(_trace("collectat(client,photo,p1)", "collectat(client,photo,p2)")) == []
        assert caplog.text.count("no policy for data type 'photo'") == 1
