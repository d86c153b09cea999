"""
Tests for the architecture parser, well-formedness check and partition.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

from pathlib import Path

import pytest

from dataprove.architecture import (
    check_well_formed_arch,
    parse_architecture,
    partition_architecture,
    render_architecture,
)
from dataprove.definitions import ActionKind, SpecialKind, VarKind
from dataprove.errors import ArchitectureSyntaxError, InputError
from dataprove.terms import (
    ANONYMOUS_ENTITY,
    ANY_TIME,
    Compound,
    Crypto,
    EntityConst,
    Special,
    TimeValue,
    Var,
)

DATA = Path(__file__).parent / "data"


class TestParse:
    def test_example(self):
        arch = parse_architecture((DATA / "example1.arch").read_text())
        assert [a.kind for a in arch.actions] == [
            ActionKind.RECEIVEAT,
            ActionKind.RECEIVEAT,
            ActionKind.STOREAT,
            ActionKind.DELETEWITHIN,
        ]
        consent = arch.actions[0].payload
        assert isinstance(consent, Special) and consent.kind is SpecialKind.SCONSENT
        assert arch.actions[0].origin == ANONYMOUS_ENTITY
        assert arch.actions[0].time == ANY_TIME
        assert arch.actions[3].time == TimeValue.parse("10y")

    def test_nested_payload(self):
        arch = parse_architecture((DATA / "example2.arch").read_text())
        sealed = arch.actions[0].payload
        assert isinstance(sealed, Crypto)
        record = sealed.args[0]
        assert isinstance(record, Compound) and record.functor == "Sicknessrecord"
        assert record.args[-1] == Special(SpecialKind.META, (record.args[-1].args[0],))

    def test_origin_and_time_variable(self):
        action = parse_architecture("RECEIVEAT(sp,name,client,Time(TT))").actions[0]
        assert action.origin == EntityConst("client")
        assert action.time == Var("TT", VarKind.TIME)
        assert str(action.to_fact()) == "RECEIVEAT(sp,name,client,Time(TT))"

    def test_anonymous_origin_in_fact(self):
        action = parse_architecture("STOREAT(mainstorage,name,Time(t))").actions[0]
        assert str(action.to_fact()) == "STOREAT(mainstorage,name,_,Time(t))"
        assert str(action) == "STOREAT(mainstorage,name,Time(t))"

    def test_tool_form_with_service_provider(self):
        action = parse_architecture("STORE(sp,mainstorage,name)").actions[0]
        assert action.subject == EntityConst("mainstorage")
        assert action.origin == ANONYMOUS_ENTITY

    def test_access_map(self):
        arch = parse_architecture(
            "RECEIVE(sp,name)\nHASACCESSTO(sp,{cloud,archive})\nHASACCESSTO(sp,{cloud})"
        )
        assert arch.access("sp") == ("cloud", "archive")
        assert arch.storage_places("sp") == {"cloud", "archive", "mainstorage", "backupstorage"}
        assert arch.owners_of("cloud") == ["sp"]
        assert arch.owners_of("mainstorage") == ["sp"]

    def test_comments_blank_lines_and_duplicates(self):
        arch = parse_architecture("# comment\n\nOWN(sp,key)  # trailing\nOWN(sp,key)\n")
        assert len(arch.actions) == 1

    def test_nesting_warning(self):
        arch = parse_architecture("OWN(sp,A(B(C(d))))", max_nesting=2)
        assert len(arch.warnings) == 1
        assert "3 nested" in arch.warnings[0]
        assert parse_architecture("OWN(sp,A(B(C(d))))").warnings == ()

    def test_nesting_bound_from_environment(self, monkeypatch):
        monkeypatch.setenv("DPV_MAX_NESTING", "1")
        assert len(parse_architecture("OWN(sp,A(B(c)))").warnings) == 1
        monkeypatch.setenv("DPV_MAX_NESTING", "many")
        with pytest.raises(InputError):
            parse_architecture("OWN(sp,a)")

    def test_render_round_trip(self):
        source = (DATA / "example2.arch").read_text()
        arch = parse_architecture(source)
        assert parse_architecture(render_architecture(arch)) == arch


class TestErrors:
    @pytest.mark.parametrize(
        "source,message",
        [
            ("OWN(sp, name)", "no space"),
            ("FETCH(sp,name)", "unknown action keyword"),
            ("RECEIVEAT(sp,name)", "Time"),
            ("STOREAT(mainstorage,name,Time(2y))", "non-specific"),
            ("DELETEWITHIN(mainstorage,name,Time(t))", "time value"),
            ("OWN(Sp,name)", "not a valid entity"),
            ("OWN(sp,Account)", "needs arguments"),
            ("OWN(sp,Senc(name))", "takes 2 argument"),
            ("OWN(sp,Cconsent(name))", "only be received"),
            ("OWN(sp,Record(Meta(ip),name))", "last argument"),
            ("OWN(sp,mainstorage)", "reserved keyword"),
            ("OWN(sp,name", "cannot parse"),
        ],
    )
    def test_rejected(self, source, message):
        with pytest.raises(ArchitectureSyntaxError, match=message):
            parse_architecture(source)

    def test_line_number(self):
        with pytest.raises(ArchitectureSyntaxError) as ex:
            parse_architecture("OWN(sp,key)\n\nOWN(sp,Key)")
        assert ex.value.line == 3


class TestWellFormed:
    def test_examples_are_well_formed(self):
        for name in ("example1.arch", "example2.arch"):
            assert check_well_formed_arch(parse_architecture((DATA / name).read_text())) == []

    def test_store_without_source(self):
        arch = parse_architecture("STOREAT(mainstorage,name,Time(t))")
        violations = check_well_formed_arch(arch)
        assert len(violations) == 1
        assert "never owned, received or created" in violations[0].detail

    def test_received_inside_crypto_is_no_source(self):
        arch = parse_architecture(
            "RECEIVE(sp,Senc(name,key))\nSTORE(mainstorage,name)\nCREATE(sp,Account(address))\n"
            "STORE(mainstorage,address)"
        )
        violations = check_well_formed_arch(arch)
        assert [str(v.action) for v in violations] == ["STORE(mainstorage,name)"]

    def test_delete_without_store(self):
        arch = parse_architecture("OWN(sp,name)\nDELETE(mainstorage,name)")
        assert "never stored" in check_well_formed_arch(arch)[0].detail


def test_partition():
    arch = parse_architecture(
        "RECEIVEAT(sp,name,Time(t))\nOWN(sp,Record(P(ds),Meta(ip)))\nOWN(sp,key)"
    )
    partition = partition_architecture(arch)
    assert [str(f) for f in partition.arch_time] == ["RECEIVEAT(sp,name,_,Time(t))"]
    assert len(partition.arch_pseudo) == 1
    assert partition.arch_pseudo == partition.arch_meta
    assert [str(f) for f in partition.arch] == ["OWN(sp,key)"]
    assert len(partition.all()) == 3
