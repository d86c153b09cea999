"""
Tests for trivial, purpose and unique fact generation.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

from pathlib import Path

from dataprove.architecture import parse_architecture
from dataprove.facts import generate_purpose_facts, generate_trivial_facts, generate_unique_facts
from dataprove.policy import parse_policy

DATA = Path(__file__).parent / "data"


def _trivial(source: str) -> list[str]:
    return [str(f) for f in generate_trivial_facts(parse_architecture(source))]


def test_trivial_facts_of_a_record():
    assert _trivial("RECEIVE(sp,Account(name,address))") == [
        "HAS(sp,name)",
        "HAS(sp,address)",
        "LINK(sp,name,address)",
        "LINKUNIQUE(sp,name,address)",
    ]


def test_trivial_facts_descend_into_meta():
    facts = _trivial("OWN(sp,Record(name,Meta(ip)))")
    assert "HAS(sp,Meta(ip))" in facts
    assert "HAS(sp,ip)" in facts
    assert "LINK(sp,name,ip)" in facts
    # a position and one inside it are never linked
    assert "LINK(sp,Meta(ip),ip)" not in facts


def test_no_trivial_facts_from_crypto_or_storage():
    assert _trivial("RECEIVE(sp,Senc(Account(name,address),key))") == []
    assert _trivial("OWN(sp,name)\nSTORE(mainstorage,Account(name,address))") == []
    assert _trivial((DATA / "example2.arch").read_text()) == []


def test_trivial_facts_are_not_repeated():
    facts = _trivial("OWN(sp,Account(name))\nCREATE(sp,Profile(name))")
    assert facts.count("HAS(sp,name)") == 1


def test_purpose_facts():
    arch = parse_architecture(
        "CREATEAT(sp,Account(name),Time(t))\n"
        "CALCULATEAT(sp,Score(name),Time(t))\n"
        "RECEIVEAT(sp,Fwconsent(name,insurance),Time(t))\n"
        "CREATEAT(insurance,Offer(Senc(name,key)),Time(t))\n"
        "CREATEAT(bank,Loan(name),Time(t))\n"
    )
    purposes = generate_purpose_facts(arch)
    assert [str(f) for f in purposes.cpurp] == [
        "CPURPOSE(Account(name),createat)",
        "CPURPOSE(Offer(Senc(name,key)),createat)",
        "CPURPOSE(Loan(name),createat)",
    ]
    assert [str(f) for f in purposes.upurp] == ["UPURPOSE(Score(name),calculateat)"]
    assert [str(f) for f in purposes.fwpurp] == ["FWPURPOSE(Offer(Senc(name,key)),createat)"]
    assert purposes.for_predicate("UPURPOSE") == purposes.upurp
    assert len(purposes.all()) == 5


def test_unique_facts():
    policy = parse_policy((DATA / "example2.policy").read_text())
    assert [str(f) for f in generate_unique_facts(policy)] == ["UNIQUE(nhsnumber)"]
