"""
Policy model, policy DSL parser and well-formedness check.

A policy declares entities and data groups and gives every data group a
bundle of seven sub-policies: collection, usage, storage, deletion, transfer,
possession (``HAS``) and data connection (``LINKPERMIT`` / ``LINKFORBID``).
Sub-policies that are not written down are absent.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import logging
from dataclasses import dataclass, field
from typing import Any

from lark import Lark, Token, Transformer
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, VisitError

from .architecture import Architecture
from .definitions import RESERVED_ENTITIES, SERVICE_PROVIDER, STORAGE_PLACES, SubPolicy
from .errors import PolicyReferenceError, PolicySyntaxError
from .terms import ANY_TIME, NonSpecificTime, TimeValue

_LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class EntityDecl:
    """Declared entity, component or place."""

    short_name: str
    description: str = ""


@dataclass(frozen=True)
class DataGroupDecl:
    """Data group: a named data type with descriptive member types."""

    group_name: str
    member_types: tuple[str, ...] = ()
    is_unique: bool = False
    """Whether data of this group identifies a single individual."""


@dataclass(frozen=True)
class Purpose:
    """Purpose ``act:Type``: the action and the type of data it produces."""

    action: str
    result_type: str

    def __str__(self) -> str:
        return f"{self.action}:{self.result_type}"


@dataclass(frozen=True)
class PurposePolicy:
    """Collection or usage sub-policy."""

    consent_required: bool = False
    purposes: tuple[Purpose, ...] = ()


@dataclass(frozen=True)
class StoragePolicy:
    """Storage sub-policy."""

    consent_required: bool = False
    where: tuple[str, ...] = ()


@dataclass(frozen=True)
class DeletionPolicy:
    """Deletion (retention) sub-policy."""

    fromwhere: tuple[str, ...]
    delay: TimeValue | NonSpecificTime
    """Retention delay; the non-specific ``tt`` means no bound."""


@dataclass(frozen=True)
class TransferPolicy:
    """Transfer (forwarding) sub-policy."""

    consent_required: bool = False
    to: tuple[str, ...] = ()
    purposes: tuple[Purpose, ...] = ()


@dataclass(frozen=True)
class LinkPermit:
    """Entity may link the bundle's data type with ``other_type``."""

    entity: str
    other_type: str
    unique_allowed: bool = False


@dataclass(frozen=True)
class LinkForbid:
    """Entity may not link the bundle's data type with ``other_type``."""

    entity: str
    other_type: str
    only_unique: bool = False
    """Only unique linkage is forbidden; plain linkage stays acceptable."""


@dataclass(frozen=True)
class SubPolicyBundle:
    """The seven sub-policies for one data type."""

    data_type: str
    collection: PurposePolicy | None = None
    usage: PurposePolicy | None = None
    storage: StoragePolicy | None = None
    deletion: DeletionPolicy | None = None
    transfer: TransferPolicy | None = None
    has: tuple[str, ...] | None = None
    """Entities permitted to possess the data; None if not written down."""
    link_permit: tuple[LinkPermit, ...] = ()
    link_forbid: tuple[LinkForbid, ...] = ()

    def present(self) -> list[SubPolicy]:
        """Sub-policies that are written down."""
        found = [
            kind
            for kind, value in (
                (SubPolicy.COLLECTION, self.collection),
                (SubPolicy.USAGE, self.usage),
                (SubPolicy.STORAGE, self.storage),
                (SubPolicy.DELETION, self.deletion),
                (SubPolicy.TRANSFER, self.transfer),
                (SubPolicy.HAS, self.has),
            )
            if value is not None
        ]
        if self.link_permit or self.link_forbid:
            found.append(SubPolicy.LINK)
        return found

    def may_have(self, entity: str) -> bool:
        """Whether ``entity`` is listed in the possession sub-policy."""
        return entity in (self.has or ())


@dataclass(frozen=True)
class Policy:
    """A complete policy."""

    entities: tuple[EntityDecl, ...] = ()
    groups: tuple[DataGroupDecl, ...] = ()
    bundles: dict[str, SubPolicyBundle] = field(default_factory=dict)

    @property
    def entity_names(self) -> list[str]:
        """The service provider followed by the declared entities."""
        return [SERVICE_PROVIDER] + [e.short_name for e in self.entities]

    @property
    def unique_groups(self) -> list[str]:
        """Names of the groups flagged as unique."""
        return [g.group_name for g in self.groups if g.is_unique]

    def group(self, name: str) -> DataGroupDecl | None:
        """Look up a data group by name."""
        return next((g for g in self.groups if g.group_name == name), None)


@dataclass(frozen=True)
class Conflict:
    """Two sub-policies of one bundle that cannot both hold."""

    data_type: str
    first: str
    second: str
    detail: str

    def __str__(self) -> str:
        return f"[{self.data_type}] ({self.first}, {self.second}): {self.detail}"


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_GRAMMAR = r"""
    start: _statement*
    _statement: entity | datagroup | policy

    entity: "ENTITY" NAME ESCAPED_STRING
    datagroup: "DATAGROUP" NAME "UNIQUE" "=" YESNO "{" NAME* "}"
    policy: "POLICY" NAME "{" _section* "}"

    _section: collection | usage | storage | deletion | transfer
            | has | linkpermit | linkforbid
    collection: COLLECTION "{" (_field | ";")* "}"
    usage: USAGE "{" (_field | ";")* "}"
    storage: STORAGE "{" (_field | ";")* "}"
    deletion: DELETION "{" (_field | ";")* "}"
    transfer: TRANSFER "{" (_field | ";")* "}"
    has: HAS "{" (NAME | ",")* "}"
    linkpermit: LINKPERMIT "{" (link | ";")* "}"
    linkforbid: LINKFORBID "{" (link | ";")* "}"
    link: NAME ":" NAME "UNIQUE" "=" YESNO

    _field: consent | purposes | where | fromwhere | delay | to
    consent: CONSENT "=" YESNO
    purposes: PURPOSES "=" (purpose ("," purpose)*)?
    purpose: NAME ":" NAME
    where: WHERE "=" NAME ("," NAME)*
    fromwhere: FROMWHERE "=" NAME ("," NAME)*
    to: TO "=" NAME ("," NAME)*
    delay: DELAY "=" (TVALUE | NONSPECIFIC)

    COLLECTION: "COLLECTION"
    USAGE: "USAGE"
    STORAGE: "STORAGE"
    DELETION: "DELETION"
    TRANSFER: "TRANSFER"
    HAS: "HAS"
    LINKPERMIT: "LINKPERMIT"
    LINKFORBID: "LINKFORBID"
    CONSENT: "consent"
    PURPOSES: "purposes"
    WHERE: "where"
    FROMWHERE: "fromwhere"
    TO: "to"
    DELAY: "delay"

    YESNO: "Y" | "N"
    TVALUE: /[0-9]+(mo|y|w|d|h|m)(\+[0-9]+(mo|y|w|d|h|m))*/
    NONSPECIFIC: "tt" | "t"
    NAME: /[A-Za-z_][A-Za-z0-9_]*/
    COMMENT: /#[^\n]*/

    %import common.ESCAPED_STRING
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

_PARSER = Lark(_GRAMMAR, parser="lalr", propagate_positions=True)

_ALLOWED_FIELDS = {
    "COLLECTION": {"consent", "purposes"},
    "USAGE": {"consent", "purposes"},
    "STORAGE": {"consent", "where"},
    "DELETION": {"fromwhere", "delay"},
    "TRANSFER": {"consent", "to", "purposes"},
}


def _lowercase(token: Token, what: str) -> str:
    if token != token.lower():
        raise PolicySyntaxError(
            f"{what} '{token}' must be lowercase", token.line, token.column
        )
    return str(token)


class _PolicyTransformer(Transformer):
    """Build policy model objects from the parse tree."""

    # pylint: disable=C0116

    def entity(self, items):
        name, description = items
        return EntityDecl(_lowercase(name, "entity name"), _unquote(description))

    def datagroup(self, items):
        name, unique, *members = items
        return DataGroupDecl(
            _lowercase(name, "group name"),
            tuple(str(m) for m in members),
            unique == "Y",
        )

    def policy(self, items):
        name, *sections = items
        return name, sections

    def purpose(self, items):
        action, result = items
        return Purpose(str(action), str(result))

    def consent(self, items):
        return items[0], items[1] == "Y"

    def purposes(self, items):
        return items[0], tuple(items[1:])

    def where(self, items):
        return items[0], tuple(str(n) for n in items[1:])

    fromwhere = where
    to = where

    def delay(self, items):
        keyword, value = items
        if value.type == "NONSPECIFIC":
            return keyword, ANY_TIME
        return keyword, TimeValue.parse(str(value))

    def _fields(self, items) -> tuple[Token, dict[str, Any]]:
        keyword, *fields = items
        values: dict[str, Any] = {}
        for name, value in fields:
            if name not in _ALLOWED_FIELDS[keyword]:
                raise PolicySyntaxError(
                    f"'{name}' is not allowed in {keyword}", name.line, name.column
                )
            if name in values:
                raise PolicySyntaxError(
                    f"'{name}' given twice in {keyword}", name.line, name.column
                )
            values[str(name)] = value
        return keyword, values

    def collection(self, items):
        keyword, values = self._fields(items)
        return keyword, PurposePolicy(
            values.get("consent", False), values.get("purposes", ())
        )

    usage = collection

    def storage(self, items):
        keyword, values = self._fields(items)
        return keyword, StoragePolicy(values.get("consent", False), values.get("where", ()))

    def deletion(self, items):
        keyword, values = self._fields(items)
        if "delay" not in values or "fromwhere" not in values:
            raise PolicySyntaxError(
                "DELETION needs both fromwhere and delay", keyword.line, keyword.column
            )
        return keyword, DeletionPolicy(values["fromwhere"], values["delay"])

    def transfer(self, items):
        keyword, values = self._fields(items)
        return keyword, TransferPolicy(
            values.get("consent", False),
            values.get("to", ()),
            values.get("purposes", ()),
        )

    def has(self, items):
        keyword, *names = items
        return keyword, names

    def link(self, items):
        return items

    def linkpermit(self, items):
        return items[0], items[1:]

    linkforbid = linkpermit


def _unquote(token: Token) -> str:
    return str(token)[1:-1].replace('\\"', '"').replace("\\\\", "\\")


class _PolicyBuilder:
    """Resolve references and assemble the :class:`Policy`."""

    def __init__(self):
        self.entities: dict[str, EntityDecl] = {}
        self.groups: dict[str, DataGroupDecl] = {}
        self.bundles: dict[str, SubPolicyBundle] = {}

    def add_entity(self, decl: EntityDecl) -> None:
        if decl.short_name == SERVICE_PROVIDER or decl.short_name in self.entities:
            raise PolicyReferenceError(f"duplicate entity '{decl.short_name}'")
        self.entities[decl.short_name] = decl

    def add_group(self, decl: DataGroupDecl) -> None:
        if decl.group_name in self.groups:
            raise PolicyReferenceError(f"duplicate data group '{decl.group_name}'")
        self.groups[decl.group_name] = decl

    def _entity(self, token: Token) -> str:
        name = str(token)
        if name not in self.entities and name not in RESERVED_ENTITIES:
            raise PolicyReferenceError(
                f"line {token.line}: undeclared entity '{name}'"
            )
        return name

    def _place(self, token: Token) -> str:
        name = str(token)
        if name not in self.entities and name not in RESERVED_ENTITIES:
            _LOG.warning("line %s: place '%s' is not declared", token.line, name)
        return name

    def _group(self, token: Token) -> str:
        name = str(token)
        if name not in self.groups:
            raise PolicyReferenceError(f"line {token.line}: undeclared data group '{name}'")
        return name

    def add_bundle(self, name: Token, sections: list) -> None:
        data_type = self._group(name)
        if data_type in self.bundles:
            raise PolicyReferenceError(f"duplicate policy for data group '{data_type}'")
        values: dict[str, Any] = {}
        for keyword, value in sections:
            if str(keyword) in values:
                raise PolicyReferenceError(
                    f"line {keyword.line}: {keyword} given twice for '{data_type}'"
                )
            values[str(keyword)] = value

        storage = values.get("STORAGE")
        if storage is not None:
            storage = StoragePolicy(
                storage.consent_required, tuple(self._place(p) for p in storage.where)
            )
        deletion = values.get("DELETION")
        if deletion is not None:
            deletion = DeletionPolicy(
                tuple(self._place(p) for p in deletion.fromwhere), deletion.delay
            )
        transfer = values.get("TRANSFER")
        if transfer is not None:
            transfer = TransferPolicy(
                transfer.consent_required,
                tuple(self._entity(e) for e in transfer.to),
                transfer.purposes,
            )
        has = values.get("HAS")
        if has is not None:
            has = tuple(self._entity(e) for e in has)
        permits = tuple(
            LinkPermit(self._entity(e), self._group(g), flag == "Y")
            for e, g, flag in values.get("LINKPERMIT", ())
        )
        forbids = tuple(
            LinkForbid(self._entity(e), self._group(g), flag == "Y")
            for e, g, flag in values.get("LINKFORBID", ())
        )
        self.bundles[data_type] = SubPolicyBundle(
            data_type,
            collection=values.get("COLLECTION"),
            usage=values.get("USAGE"),
            storage=storage,
            deletion=deletion,
            transfer=transfer,
            has=has,
            link_permit=permits,
            link_forbid=forbids,
        )

    def build(self) -> Policy:
        return Policy(tuple(self.entities.values()), tuple(self.groups.values()), self.bundles)


def parse_policy(source_text: str) -> Policy:
    """
    Parse a policy written in the policy DSL.

    :param source_text: DSL source
    :return: the parsed policy
    :raises PolicySyntaxError: on a syntax error, with line and column
    :raises PolicyReferenceError: on undeclared references or duplicates
    """
    try:
        tree = _PARSER.parse(source_text)
        statements = _PolicyTransformer().transform(tree).children
    except (UnexpectedCharacters, UnexpectedEOF, UnexpectedInput) as ex:
        raise PolicySyntaxError(
            _describe(ex), getattr(ex, "line", None), getattr(ex, "column", None)
        ) from ex
    except VisitError as ex:
        raise ex.orig_exc from ex

    builder = _PolicyBuilder()
    # declarations may follow their first use
    pending = []
    for statement in statements:
        if isinstance(statement, EntityDecl):
            builder.add_entity(statement)
        elif isinstance(statement, DataGroupDecl):
            builder.add_group(statement)
        else:
            pending.append(statement)
    for name, sections in pending:
        builder.add_bundle(name, sections)

    policy = builder.build()
    _LOG.debug(
        "parsed policy: %d entities, %d groups, %d bundles",
        len(policy.entities),
        len(policy.groups),
        len(policy.bundles),
    )
    return policy


def _describe(ex: UnexpectedInput) -> str:
    if isinstance(ex, UnexpectedEOF):
        return "unexpected end of input"
    if isinstance(ex, UnexpectedCharacters):
        return f"unexpected character '{ex.char}'"
    token = getattr(ex, "token", None)
    return f"unexpected token '{token}'" if token is not None else "syntax error"


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _yn(flag: bool) -> str:
    return "Y" if flag else "N"


def _section(keyword: str, fields: list[str], separator: str = " ; ") -> str:
    body = separator.join(f for f in fields if f)
    return f"  {keyword} {{ {body} }}" if body else f"  {keyword} {{ }}"


def _consent(required: bool) -> str:
    return f"consent={_yn(required)}"


def _listing(name: str, values: tuple[object, ...]) -> str:
    return f"{name} = {', '.join(str(v) for v in values)}" if values else ""


def _render_bundle(bundle: SubPolicyBundle) -> list[str]:
    lines = [f"POLICY {bundle.data_type} {{"]
    for keyword, sub in (("COLLECTION", bundle.collection), ("USAGE", bundle.usage)):
        if sub is not None:
            lines.append(
                _section(
                    keyword,
                    [_consent(sub.consent_required), _listing("purposes", sub.purposes)],
                )
            )
    if bundle.storage is not None:
        lines.append(
            _section(
                "STORAGE",
                [
                    _consent(bundle.storage.consent_required),
                    _listing("where", bundle.storage.where),
                ],
            )
        )
    if bundle.deletion is not None:
        delay = bundle.deletion.delay
        delay_text = "tt" if isinstance(delay, NonSpecificTime) else str(delay)
        lines.append(
            _section(
                "DELETION",
                [_listing("fromwhere", bundle.deletion.fromwhere), f"delay = {delay_text}"],
            )
        )
    if bundle.transfer is not None:
        lines.append(
            _section(
                "TRANSFER",
                [
                    _consent(bundle.transfer.consent_required),
                    _listing("to", bundle.transfer.to),
                    _listing("purposes", bundle.transfer.purposes),
                ],
            )
        )
    if bundle.has is not None:
        lines.append(_section("HAS", list(bundle.has), separator=" "))
    if bundle.link_permit:
        lines.append(
            _section(
                "LINKPERMIT",
                [
                    f"{p.entity} : {p.other_type} UNIQUE={_yn(p.unique_allowed)}"
                    for p in bundle.link_permit
                ],
            )
        )
    if bundle.link_forbid:
        lines.append(
            _section(
                "LINKFORBID",
                [
                    f"{f.entity} : {f.other_type} UNIQUE={_yn(f.only_unique)}"
                    for f in bundle.link_forbid
                ],
            )
        )
    lines.append("}")
    return lines


def render_policy(policy: Policy) -> str:
    """Render a policy back to the DSL in canonical layout."""
    lines = []
    for entity in policy.entities:
        description = entity.description.replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'ENTITY {entity.short_name} "{description}"')
    for group in policy.groups:
        members = " ".join(group.member_types)
        body = f"{{ {members} }}" if members else "{ }"
        lines.append(f"DATAGROUP {group.group_name} UNIQUE={_yn(group.is_unique)} {body}")
    for bundle in policy.bundles.values():
        lines.extend(_render_bundle(bundle))
    return "\n".join(lines) + "\n" if lines else ""


# ---------------------------------------------------------------------------
# Well-formedness
# ---------------------------------------------------------------------------


def _possessors(place: str) -> list[str]:
    """Entities that come to possess data stored at ``place``."""
    return [place, SERVICE_PROVIDER] if place in STORAGE_PLACES else [place]


def _accessors(place: str, arch: Architecture | None) -> list[str]:
    """Entities given access to ``place`` by HASACCESSTO lines."""
    if arch is None:
        return []
    return sorted(e for e, targets in arch.has_access_to.items() if place in targets)


def check_well_formed_policy(policy: Policy, arch: Architecture | None = None) -> list[Conflict]:
    """
    Find pairs of conflicting sub-policies.

    Detected conflicts:

    - collection by sp, or storage at a place, while the possessing entity is
      not in a written-down ``HAS`` list (likewise transfer recipients);
    - storage at a place that an entity may access through the architecture's
      ``HASACCESSTO`` lines, while that entity is not in the ``HAS`` list;
    - a link permitted and forbidden for the same entity and data type;
    - deletion places that are not storage places.

    :param policy: parsed policy
    :param arch: architecture whose access map is checked against the
                 storage places; None to check the policy alone
    :return: every conflict found, in bundle order
    """
    conflicts: list[Conflict] = []
    for data_type, bundle in policy.bundles.items():
        if bundle.has is not None:
            if bundle.collection is not None and not bundle.may_have(SERVICE_PROVIDER):
                conflicts.append(
                    Conflict(
                        data_type,
                        SubPolicy.COLLECTION.value,
                        SubPolicy.HAS.value,
                        f"sp collects {data_type} but does not have the right to have it",
                    )
                )
            if bundle.storage is not None:
                for place in bundle.storage.where:
                    if not any(bundle.may_have(e) for e in _possessors(place)):
                        conflicts.append(
                            Conflict(
                                data_type,
                                SubPolicy.STORAGE.value,
                                SubPolicy.HAS.value,
                                f"{data_type} is stored at {place} but "
                                f"{' or '.join(_possessors(place))} may not have it",
                            )
                        )
                    for accessor in _accessors(place, arch):
                        if not bundle.may_have(accessor):
                            conflicts.append(
                                Conflict(
                                    data_type,
                                    SubPolicy.STORAGE.value,
                                    SubPolicy.HAS.value,
                                    f"{data_type} is stored at {place}, which {accessor} "
                                    f"has access to, but {accessor} may not have it",
                                )
                            )
            if bundle.transfer is not None:
                for recipient in bundle.transfer.to:
                    if not bundle.may_have(recipient):
                        conflicts.append(
                            Conflict(
                                data_type,
                                SubPolicy.TRANSFER.value,
                                SubPolicy.HAS.value,
                                f"{data_type} is forwarded to {recipient} "
                                "which may not have it",
                            )
                        )
        for permit in bundle.link_permit:
            for forbid in bundle.link_forbid:
                if (permit.entity, permit.other_type) != (forbid.entity, forbid.other_type):
                    continue
                if not forbid.only_unique or permit.unique_allowed:
                    conflicts.append(
                        Conflict(
                            data_type,
                            "link-permit",
                            "link-forbid",
                            f"{permit.entity} is both permitted and forbidden to link "
                            f"{data_type} with {permit.other_type}",
                        )
                    )
        if bundle.deletion is not None and bundle.storage is not None:
            missing = [p for p in bundle.deletion.fromwhere if p not in bundle.storage.where]
            if missing:
                conflicts.append(
                    Conflict(
                        data_type,
                        SubPolicy.DELETION.value,
                        SubPolicy.STORAGE.value,
                        f"{data_type} is deleted from {', '.join(missing)} "
                        "where it is never stored",
                    )
                )
    for conflict in conflicts:
        _LOG.debug("policy conflict: %s", conflict)
    return conflicts
