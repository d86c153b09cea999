"""
Tests for the policy parser, renderer and well-formedness check.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

from pathlib import Path

import pytest

from dataprove.architecture import parse_architecture
from dataprove.definitions import SubPolicy
from dataprove.errors import PolicyReferenceError, PolicySyntaxError
from dataprove.policy import (
    Purpose,
    check_well_formed_policy,
    parse_policy,
    render_policy,
)
from dataprove.terms import ANY_TIME, TimeValue

DATA = Path(__file__).parent / "data"

FULL_POLICY = """
ENTITY insurance "Insurance company"
ENTITY auditor "External \\"trusted\\" auditor"
DATAGROUP personalinfo UNIQUE=N { name address }
DATAGROUP nhsnumber UNIQUE=Y { nhsnumber }

POLICY personalinfo {
  COLLECTION { consent=Y ; purposes=createat:Account, calculateat:Score }
  USAGE { consent=N ; purposes=calculateat:Score }
  STORAGE { consent=Y ; where=mainstorage, backupstorage }
  DELETION { fromwhere=mainstorage ; delay=2y+6mo }
  TRANSFER { consent=Y ; to=insurance ; purposes=createat:Offer }
  HAS { sp, insurance, mainstorage, backupstorage }
  LINKPERMIT { insurance : nhsnumber UNIQUE=Y ; }
  LINKFORBID { sp : nhsnumber UNIQUE=Y }
}
"""


class TestParse:
    def test_declarations(self):
        policy = parse_policy(FULL_POLICY)
        assert policy.entity_names == ["sp", "insurance", "auditor"]
        assert policy.entities[1].description == 'External "trusted" auditor'
        assert policy.unique_groups == ["nhsnumber"]
        assert policy.group("personalinfo").member_types == ("name", "address")
        assert policy.group("missing") is None

    def test_bundle(self):
        bundle = parse_policy(FULL_POLICY).bundles["personalinfo"]
        assert bundle.collection.consent_required
        assert bundle.collection.purposes == (
            Purpose("createat", "Account"),
            Purpose("calculateat", "Score"),
        )
        assert not bundle.usage.consent_required
        assert bundle.storage.where == ("mainstorage", "backupstorage")
        assert bundle.deletion.delay == TimeValue.parse("2y+6mo")
        assert bundle.transfer.to == ("insurance",)
        assert bundle.has == ("sp", "insurance", "mainstorage", "backupstorage")
        assert bundle.link_permit[0].unique_allowed
        assert bundle.link_forbid[0].only_unique
        assert bundle.present() == list(SubPolicy)

    def test_absent_sub_policies(self):
        bundle = parse_policy((DATA / "example1.policy").read_text()).bundles["personalinfo"]
        assert bundle.collection is None
        assert bundle.transfer is None
        assert bundle.present() == [SubPolicy.STORAGE, SubPolicy.DELETION, SubPolicy.HAS]

    def test_non_specific_delay(self):
        policy = parse_policy(
            "DATAGROUP a UNIQUE=N { a }\n"
            "POLICY a { DELETION { fromwhere=mainstorage ; delay=tt } }\n"
        )
        assert policy.bundles["a"].deletion.delay == ANY_TIME

    def test_declarations_may_follow_use(self):
        policy = parse_policy('POLICY a { HAS { clinic } }\nENTITY clinic "c"\nDATAGROUP a UNIQUE=N { }')
        assert policy.bundles["a"].has == ("clinic",)

    def test_render_round_trip(self):
        policy = parse_policy(FULL_POLICY)
        assert parse_policy(render_policy(policy)) == policy


class TestErrors:
    def test_syntax_error_position(self):
        with pytest.raises(PolicySyntaxError) as ex:
            parse_policy("DATAGROUP a UNIQUE=N { a }\nPOLICY a {\n  STORAGE { consent=maybe }\n}")
        assert ex.value.line == 3
        assert ex.value.column is not None

    def test_field_not_allowed(self):
        with pytest.raises(PolicySyntaxError, match="not allowed in STORAGE"):
            parse_policy("DATAGROUP a UNIQUE=N { a }\nPOLICY a { STORAGE { delay=2y } }")

    def test_deletion_needs_delay(self):
        with pytest.raises(PolicySyntaxError, match="fromwhere and delay"):
            parse_policy("DATAGROUP a UNIQUE=N { a }\nPOLICY a { DELETION { fromwhere=x } }")

    def test_uppercase_entity(self):
        with pytest.raises(PolicySyntaxError, match="lowercase"):
            parse_policy('ENTITY Clinic "c"')

    def test_undeclared_group(self):
        with pytest.raises(PolicyReferenceError, match="undeclared data group"):
            parse_policy("POLICY a { HAS { sp } }")

    def test_undeclared_entity(self):
        with pytest.raises(PolicyReferenceError, match="undeclared entity 'clinic'"):
            parse_policy("DATAGROUP a UNIQUE=N { a }\nPOLICY a { HAS { clinic } }")

    def test_duplicates(self):
        with pytest.raises(PolicyReferenceError, match="duplicate entity"):
            parse_policy('ENTITY c "x"\nENTITY c "y"')
        with pytest.raises(PolicyReferenceError, match="given twice"):
            parse_policy("DATAGROUP a UNIQUE=N { a }\nPOLICY a { HAS { sp } HAS { sp } }")


class TestWellFormed:
    def test_examples_have_no_conflicts(self):
        for name in ("example1.policy", "example2.policy"):
            assert check_well_formed_policy(parse_policy((DATA / name).read_text())) == []

    def test_collection_without_possession(self):
        policy = parse_policy(
            "DATAGROUP a UNIQUE=N { a }\nPOLICY a { COLLECTION { consent=Y } HAS { mainstorage } }"
        )
        conflicts = check_well_formed_policy(policy)
        assert [(c.first, c.second) for c in conflicts] == [("collection", "has")]

    def test_storage_place_without_possession(self):
        policy = parse_policy(
            'ENTITY cloud "c"\nDATAGROUP a UNIQUE=N { a }\n'
            "POLICY a { STORAGE { where=cloud, mainstorage } HAS { sp } }"
        )
        conflicts = check_well_formed_policy(policy)
        assert len(conflicts) == 1
        assert "stored at cloud" in conflicts[0].detail

    def test_storage_place_reachable_from_sp(self):
        policy = parse_policy(
            "DATAGROUP a UNIQUE=N { a }\nPOLICY a { STORAGE { where=mainstorage } HAS { mainstorage } }"
        )
        assert check_well_formed_policy(policy) == []
        arch = parse_architecture("STORE(mainstorage,a)\nHASACCESSTO(sp,{mainstorage})")
        conflicts = check_well_formed_policy(policy, arch)
        assert [(c.first, c.second) for c in conflicts] == [("storage", "has")]
        assert conflicts[0].detail == (
            "a is stored at mainstorage, which sp has access to, but sp may not have it"
        )

    def test_transfer_and_deletion_conflicts(self):
        policy = parse_policy(
            'ENTITY bank "b"\nDATAGROUP a UNIQUE=N { a }\n'
            "POLICY a {\n"
            "  STORAGE { where=mainstorage }\n"
            "  DELETION { fromwhere=backupstorage ; delay=1y }\n"
            "  TRANSFER { to=bank }\n"
            "  HAS { sp }\n"
            "}"
        )
        pairs = [(c.first, c.second) for c in check_well_formed_policy(policy)]
        assert pairs == [("transfer", "has"), ("deletion", "storage")]

    def test_link_permitted_and_forbidden(self):
        policy = parse_policy(
            "DATAGROUP a UNIQUE=N { a }\nDATAGROUP b UNIQUE=N { b }\n"
            "POLICY a { LINKPERMIT { sp : b UNIQUE=N } LINKFORBID { sp : b UNIQUE=N } }"
        )
        conflicts = check_well_formed_policy(policy)
        assert [(c.first, c.second) for c in conflicts] == [("link-permit", "link-forbid")]

    def test_unique_only_forbid_is_compatible_with_plain_permit(self):
        policy = parse_policy(
            "DATAGROUP a UNIQUE=N { a }\nDATAGROUP b UNIQUE=N { b }\n"
            "POLICY a { LINKPERMIT { sp : b UNIQUE=N } LINKFORBID { sp : b UNIQUE=Y } }"
        )
        assert check_well_formed_policy(policy) == []
