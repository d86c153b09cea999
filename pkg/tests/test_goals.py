"""
Tests for goal generation.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

from pathlib import Path

from dataprove.architecture import parse_architecture
from dataprove.definitions import GoalKind, Polarity, SubPolicy
from dataprove.goals import data_types, generate_goals
from dataprove.policy import parse_policy

DATA = Path(__file__).parent / "data"


def _policy(name: str):
    return parse_policy((DATA / name).read_text())


def _strings(goals) -> list[str]:
    return [str(g) for g in goals]


class TestExample1:
    def test_goals(self):
        goals = generate_goals(_policy("example1.policy"))
        assert _strings(goals) == [
            "[+] scons personalinfo: STRCONSENTCOLLECTED(sp,personalinfo)",
            "[+] places personalinfo: STOREAT(mainstorage,personalinfo,EV_from,Time(TT))"
            " | STORE(mainstorage,personalinfo,EV_from)",
            "[-] hasupto personalinfo: HASUPTO(mainstorage,personalinfo,Time(8y))",
            "[+] within personalinfo: DELETEWITHIN(mainstorage,personalinfo,EV_from,Time(8y))"
            " | DELETE(mainstorage,personalinfo,EV_from)",
            "[-] has personalinfo: HAS(sp,personalinfo)",
        ]

    def test_notes_for_absent_sub_policies(self):
        notes = generate_goals(_policy("example1.policy")).notes
        assert notes == (
            "personalinfo: no collection sub-policy, its requirements are not checked",
            "personalinfo: no usage sub-policy, its requirements are not checked",
        )

    def test_retention_goal_carries_policy_delay(self):
        goal = generate_goals(_policy("example1.policy")).of_kind(GoalKind.HASUPTO)[0]
        assert str(goal.policy_delay) == "8y"
        assert goal.sub_policy is SubPolicy.DELETION
        assert goal.entity == "mainstorage"


class TestPolarities:
    POLICY = """
    ENTITY insurance "Insurance company"
    DATAGROUP name UNIQUE=N { name }
    DATAGROUP nhsnumber UNIQUE=Y { nhsnumber }
    POLICY name {
      COLLECTION { consent=N ; purposes=createat:Account }
      TRANSFER { consent=Y ; to=insurance ; purposes=createat:Offer }
      HAS { sp, insurance }
      LINKPERMIT { insurance : nhsnumber UNIQUE=N }
      LINKFORBID { sp : nhsnumber UNIQUE=Y }
    }
    """

    def test_consent_not_required_becomes_audit(self):
        goals = generate_goals(parse_policy(self.POLICY)).of_kind(GoalKind.CCONS)
        assert len(goals) == 1
        assert goals[0].audit
        assert goals[0].polarity is Polarity.UNPROVABLE
        assert str(goals[0].fact) == "RECEIVEAT(sp,Cconsent(name),EV_from,Time(TT))"

    def test_transfer_goals(self):
        goals = generate_goals(parse_policy(self.POLICY))
        assert _strings(goals.of_kind(GoalKind.FWCONS)) == [
            "[+] fwcons name: FWCONSENTCOLLECTED(sp,name,insurance)"
        ]
        assert _strings(goals.of_kind(GoalKind.FWPURP)) == ["[+] fwpurp name: FWPURPOSE(Offer,createat)"]
        assert _strings(goals.of_kind(GoalKind.CPURP)) == ["[+] cpurp name: CPURPOSE(Account,createat)"]

    def test_possession(self):
        goals = generate_goals(parse_policy(self.POLICY)).of_kind(GoalKind.HAS)
        assert [(g.entity, g.polarity) for g in goals] == [
            ("sp", Polarity.PROVABLE),
            ("insurance", Polarity.PROVABLE),
        ]

    def test_link_polarities(self):
        goals = generate_goals(parse_policy(self.POLICY)).of_kind(GoalKind.LINK)
        table = {(g.fact.predicate, g.entity): g.polarity for g in goals}
        assert table == {
            ("LINK", "sp"): Polarity.PROVABLE,
            ("LINKUNIQUE", "sp"): Polarity.UNPROVABLE,
            ("LINK", "insurance"): Polarity.PROVABLE,
            ("LINKUNIQUE", "insurance"): Polarity.UNPROVABLE,
        }

    def test_declared_entities_override(self):
        goals = generate_goals(parse_policy(self.POLICY), declared_entities=["sp"])
        assert [g.entity for g in goals.of_kind(GoalKind.HAS)] == ["sp"]


class TestAudit:
    def test_actions_outside_the_policy(self):
        policy = parse_policy(
            'ENTITY cloud "c"\nDATAGROUP name UNIQUE=N { name }\n'
            "POLICY name {\n"
            "  COLLECTION { consent=Y ; purposes=createat:Account }\n"
            "  STORAGE { consent=Y ; where=mainstorage }\n"
            "  TRANSFER { to=cloud }\n"
            "}"
        )
        arch = parse_architecture(
            "RECEIVEAT(sp,name,Time(t))\n"
            "STOREAT(backupstorage,name,Time(t))\n"
            "RECEIVEAT(analytics,name,Time(t))\n"
            "CREATEAT(sp,Profile(name),Time(t))\n"
            "CREATEAT(sp,Account(name),Time(t))\n"
        )
        audits = [g for g in generate_goals(policy, arch=arch) if g.audit]
        assert _strings(audits) == [
            "[-] fwcons name: RECEIVEAT(sp,Fwconsent(name,cloud),EV_from,Time(TT))"
            " | RECEIVE(sp,Fwconsent(name,cloud),EV_from)",
            "[-] places name: STOREAT(backupstorage,name,EV_from,Time(TT))"
            " | STORE(backupstorage,name,EV_from)",
            "[-] fwto name: RECEIVEAT(analytics,name,EV_from,Time(TT))"
            " | RECEIVE(analytics,name,EV_from)",
            "[-] cpurp name: CPURPOSE(Profile(name),createat)",
        ]


class TestEmptyBundle:
    def test_only_possession_goals(self):
        goals = generate_goals(parse_policy("DATAGROUP x UNIQUE=N { }\nPOLICY x { }"))
        assert _strings(goals) == ["[-] has x: HAS(sp,x)"]
        assert goals.notes == (
            "x: no collection sub-policy, its requirements are not checked",
            "x: no usage sub-policy, its requirements are not checked",
        )

    def test_unlisted_entities_and_pairs_are_forbidden(self):
        policy = parse_policy(
            'ENTITY clinic "c"\nDATAGROUP x UNIQUE=N { }\nDATAGROUP y UNIQUE=N { }\nPOLICY x { }'
        )
        goals = generate_goals(policy)
        assert _strings(goals) == [
            "[-] has x: HAS(sp,x)",
            "[-] has x: HAS(clinic,x)",
            "[-] link x: LINK(sp,x,y)",
            "[-] link x: LINKUNIQUE(sp,x,y)",
            "[-] link x: LINK(clinic,x,y)",
            "[-] link x: LINKUNIQUE(clinic,x,y)",
        ]


def test_data_types_follow_declaration_order():
    assert data_types(_policy("example2.policy")) == ["nhsnumber", "name", "photo", "address"]


def test_goal_lookup():
    goals = generate_goals(_policy("example2.policy"))
    assert {g.data_type for g in goals.for_type("photo")} == {"photo"}
    assert len(goals) == len(goals.goals)
