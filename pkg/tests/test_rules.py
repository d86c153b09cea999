"""
Tests for the inference rule catalog.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import itertools

import pytest

from dataprove.definitions import RuleSet
from dataprove.rules import build_rulesets, freshen_rule, resolvent
from dataprove.terms import EntityConst, SimpleType, fact, variables


@pytest.fixture(name="rulesets")
def fixture_rulesets():
    return build_rulesets()


def test_catalog_is_shared(rulesets):
    assert build_rulesets() is rulesets


@pytest.mark.parametrize(
    "rule_set,count",
    [
        (RuleSet.DPR, 7),
        (RuleSet.HAS_UP_TO, 2),
        (RuleSet.HAS, 14),
        (RuleSet.CRYPT_HAS, 3),
        (RuleSet.LINK, 33),
        (RuleSet.LINK_UNIQUE, 32),
        (RuleSet.TRIVIAL, 3),
    ],
)
def test_rule_set_sizes(rulesets, rule_set, count):
    assert len(rulesets.named(rule_set)) == count


def test_names_are_unique(rulesets):
    names = [r.name for r in rulesets.all()]
    assert len(names) == len(set(names))


def test_trivial_rules_are_tried_last(rulesets):
    assert [r.name for r in rulesets.for_predicate("HAS")][-1] == "T1"
    assert [r.name for r in rulesets.for_predicate("HASUPTO")] == ["P1", "P11"]
    assert rulesets.for_predicate("LINK")[0].name == "L0"


def test_rendering(rulesets):
    assert str(rulesets.by_name("P4")) == "P4. HAS(EV,θV) ⊢ RECEIVEAT(EV,θV,EV_from,Time(TV))"
    assert str(rulesets.by_name("P8")) == "P8. HAS(EV,θV) ⊢ HAS(EV,Senc(θV,K)), HAS(EV,K)"


def test_lookup(rulesets):
    assert rulesets.by_name("P8").depth_guarded
    assert not rulesets.by_name("P4").depth_guarded
    assert rulesets.by_name("D5").storage_place == ("EV_place", "EV")
    with pytest.raises(KeyError):
        rulesets.by_name("Z1")


def test_linkage_variants_need_crypthas(rulesets):
    tail = rulesets.by_name("L1/d").tail
    assert [item.predicate for item in tail] == ["HAS", "HAS", "CRYPTHAS", "CRYPTHAS"]
    unique_tail = rulesets.by_name("U1").tail
    assert unique_tail[-1].predicate == "UNIQUE"


def test_freshen_rule(rulesets):
    rule = rulesets.by_name("P4")
    fresh = freshen_rule(rule, itertools.count(7))
    assert fresh.suffix == "#7"
    assert {v.name for v in variables(fresh.head)} == {"EV#7", "θV#7"}
    assert rule.suffix == ""


def test_resolvent(rulesets):
    goal = fact("HAS", EntityConst("sp"), SimpleType("name"))
    tail = resolvent(rulesets.by_name("P4"), goal, itertools.count(1))
    assert [str(t) for t in tail] == ["RECEIVEAT(sp,name,EV_from#1,Time(TV#1))"]
    assert resolvent(rulesets.by_name("P2"), goal, itertools.count(1)) is None


def test_slot_semantics(rulesets):
    semantics = rulesets.by_name("L1/b").slot_semantics
    assert semantics["θV1"] == "plain"
    assert semantics["θV3"] == "CRYPTHAS condition"
