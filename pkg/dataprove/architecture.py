"""
Architecture model, action-syntax parser and well-formedness check.

An architecture is a set of actions describing what components can do with
data, e.g. ``RECEIVEAT(sp,Cconsent(personalinfo),Time(t))``, plus the
``HASACCESSTO`` map from a component to the components it can reach.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import logging
from dataclasses import dataclass, field

from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedInput

from .definitions import (
    DATA_SUBJECT,
    NON_SPECIFIC_TIME,
    RESERVED_ENTITIES,
    SERVICE_PROVIDER,
    STORAGE_PLACES,
    ActionKind,
    CryptoKind,
    SpecialKind,
    VarKind,
    default_max_nesting,
)
from .errors import ArchitectureSyntaxError
from .terms import (
    ANONYMOUS_ENTITY,
    ANY_TIME,
    DS,
    Compound,
    Crypto,
    EntityConst,
    Fact,
    SimpleType,
    Special,
    Term,
    TimeValue,
    Var,
    mentions,
    nesting_depth,
    subterm_positions,
    time_of,
)

_LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class Action:
    """A single architecture action."""

    kind: ActionKind
    subject: EntityConst
    payload: Term
    origin: EntityConst = ANONYMOUS_ENTITY
    """Entity the data comes from; anonymous when not written down."""
    time: Term | None = None
    """Non-specific time, time variable or, for DELETEWITHIN, the delay."""

    def to_fact(self) -> Fact:
        """Normalized fact form used by the proof engine."""
        args: tuple[Term, ...] = (self.subject, self.payload)
        if self.kind.has_origin:
            args += (self.origin,)
        if self.kind.is_timed:
            args += (time_of(self.time if self.time is not None else ANY_TIME),)
        return Fact(self.kind.value, args)

    def __str__(self) -> str:
        args = [str(self.subject), str(self.payload)]
        if self.kind.has_origin and not self.origin.is_anonymous:
            args.append(str(self.origin))
        if self.kind.is_timed:
            args.append(str(time_of(self.time if self.time is not None else ANY_TIME)))
        return f"{self.kind.value}({','.join(args)})"


@dataclass(frozen=True)
class Architecture:
    """Parsed architecture: actions in file order and the access map."""

    actions: tuple[Action, ...] = ()
    has_access_to: dict[str, tuple[str, ...]] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def facts(self) -> list[Fact]:
        """Actions as facts, in file order."""
        return [a.to_fact() for a in self.actions]

    def access(self, entity: str) -> tuple[str, ...]:
        """Components reachable from ``entity`` (HasAccessTo)."""
        return self.has_access_to.get(entity, ())

    def storage_places(self, entity: str) -> set[str]:
        """Places whose stored data ``entity`` possesses."""
        places = set(self.access(entity))
        if entity == SERVICE_PROVIDER:
            places.update(STORAGE_PLACES)
        return places

    def owners_of(self, place: str) -> list[str]:
        """Entities for which ``place`` is a storage place, sorted."""
        owners = {e for e, targets in self.has_access_to.items() if place in targets}
        if place in STORAGE_PLACES:
            owners.add(SERVICE_PROVIDER)
        return sorted(owners)

    @property
    def components(self) -> set[str]:
        """Every entity named by an action."""
        names = set()
        for action in self.actions:
            names.add(action.subject.name)
            if not action.origin.is_anonymous:
                names.add(action.origin.name)
        return names


@dataclass(frozen=True)
class ArchViolation:
    """Action breaking a well-formedness requirement."""

    action: Action
    detail: str

    def __str__(self) -> str:
        return f"{self.action}: {self.detail}"


@dataclass(frozen=True)
class ArchPartition:
    """Architecture facts split by the special constructs they contain."""

    arch_time: tuple[Fact, ...] = ()
    arch_pseudo: tuple[Fact, ...] = ()
    arch_meta: tuple[Fact, ...] = ()
    arch: tuple[Fact, ...] = ()

    @property
    def untimed(self) -> tuple[Fact, ...]:
        """Every fact without a Time() construct, in file order."""
        seen = []
        for item in self.arch + self.arch_pseudo + self.arch_meta:
            if item not in seen and not mentions(item, SpecialKind.TIME):
                seen.append(item)
        return tuple(seen)

    def all(self) -> tuple[Fact, ...]:
        """Union of all subsets, without duplicates."""
        return tuple(dict.fromkeys(self.arch_time + self.untimed))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_GRAMMAR = r"""
    start: call
    call: IDENT "(" (_term ("," _term)*)? ")"
    _term: call | setlit | IDENT | TVALUE
    setlit: "{" (IDENT ("," IDENT)*)? "}"

    IDENT: /[A-Za-z_][A-Za-z0-9_]*/
    TVALUE: /[0-9]+(mo|y|w|d|h|m)(\+[0-9]+(mo|y|w|d|h|m))*/
"""

_PARSER = Lark(_GRAMMAR, parser="lalr")

_ACCESS_KEYWORD = "HASACCESSTO"
_CRYPTO = {k.value: k for k in CryptoKind}
_SPECIAL = {k.value: k for k in SpecialKind}


class _TermBuilder:
    """Turn a raw parse tree into terms, checking positions and arities."""

    def __init__(self, line: int):
        self.line = line

    def error(self, message: str) -> ArchitectureSyntaxError:
        return ArchitectureSyntaxError(message, self.line)

    @staticmethod
    def name_of(node) -> str:
        return str(node.children[0]) if isinstance(node, Tree) else str(node)

    def entity(self, node) -> EntityConst:
        if not isinstance(node, Token) or node.type != "IDENT":
            raise self.error(f"expected an entity, got '{_text(node)}'")
        name = str(node)
        if name != name.lower() or name in (DATA_SUBJECT, NON_SPECIFIC_TIME):
            raise self.error(f"'{name}' is not a valid entity name")
        return EntityConst(name)

    def time(self, node) -> Term:
        if not (isinstance(node, Tree) and self.name_of(node) == SpecialKind.TIME.value):
            raise self.error(f"expected Time(...), got '{_text(node)}'")
        args = node.children[1:]
        if len(args) != 1 or not isinstance(args[0], Token):
            raise self.error(f"malformed Time(): '{_text(node)}'")
        value = args[0]
        if value.type == "TVALUE":
            return TimeValue.parse(str(value))
        if str(value) == NON_SPECIFIC_TIME:
            return ANY_TIME
        if str(value)[0].isupper():
            return Var(str(value), VarKind.TIME)
        raise self.error(f"malformed Time(): '{_text(node)}'")

    def data(self, node) -> Term:
        if isinstance(node, Token):
            if node.type == "TVALUE":
                raise self.error(f"time value '{node}' outside Time()")
            name = str(node)
            if name == DATA_SUBJECT:
                return DS
            if name in RESERVED_ENTITIES or name == NON_SPECIFIC_TIME:
                raise self.error(f"reserved keyword '{name}' used as data")
            if name[0].isupper():
                raise self.error(f"compound data type '{name}' needs arguments")
            return SimpleType(name)
        if node.data == "setlit":
            raise self.error(f"unexpected set '{_text(node)}'")

        name = self.name_of(node)
        args = node.children[1:]
        if name in _CRYPTO:
            kind = _CRYPTO[name]
            self.check_arity(name, args, kind.arity)
            return Crypto(kind, tuple(self.data(a) for a in args))
        if name in _SPECIAL:
            kind = _SPECIAL[name]
            self.check_arity(name, args, kind.arity)
            if kind is SpecialKind.TIME:
                raise self.error("Time() is only allowed as the last action argument")
            if kind is SpecialKind.FWCONSENT:
                return Special(kind, (self.data(args[0]), self.entity(args[1])))
            return Special(kind, (self.data(args[0]),))
        if not name[0].isupper():
            raise self.error(f"'{name}' cannot take arguments")
        if not args:
            raise self.error(f"compound data type '{name}' needs arguments")
        built = tuple(self.data(a) for a in args)
        for arg in built[:-1]:
            if isinstance(arg, Special) and arg.kind is SpecialKind.META:
                raise self.error(f"Meta() must be the last argument of {name}")
        return Compound(name, built)

    def check_arity(self, name: str, args: list, arity: int) -> None:
        if len(args) != arity:
            raise self.error(f"{name} takes {arity} argument(s), got {len(args)}")


def _text(node) -> str:
    if isinstance(node, Token):
        return str(node)
    if node.data == "setlit":
        return "{" + ",".join(str(c) for c in node.children) + "}"
    name, *args = node.children
    return f"{name}({','.join(_text(a) for a in args)})"


def _build_action(tree: Tree, line: int) -> Action:
    builder = _TermBuilder(line)
    keyword = builder.name_of(tree)
    try:
        kind = ActionKind(keyword)
    except ValueError as ex:
        raise builder.error(f"unknown action keyword '{keyword}'") from ex
    args = list(tree.children[1:])

    time = None
    if kind.is_timed:
        if not args:
            raise builder.error(f"{keyword} needs a Time() argument")
        time = builder.time(args.pop())
        if kind is ActionKind.DELETEWITHIN and not isinstance(time, (TimeValue, Var)):
            raise builder.error("DELETEWITHIN needs a time value, e.g. Time(2y)")
        if kind is not ActionKind.DELETEWITHIN and isinstance(time, TimeValue):
            raise builder.error(f"{keyword} must use the non-specific Time(t)")

    # tool form with the service provider up front: STORE(sp,mainstorage,data)
    if (
        kind in (ActionKind.STORE, ActionKind.STOREAT, ActionKind.DELETE, ActionKind.DELETEWITHIN)
        and len(args) == 3
        and builder.name_of(args[0]) == SERVICE_PROVIDER
        and builder.name_of(args[1]) in STORAGE_PLACES
    ):
        args = args[1:]

    allowed = (2, 3) if kind.has_origin else (2,)
    if len(args) not in allowed:
        raise builder.error(f"{keyword} takes {' or '.join(map(str, allowed))} arguments")
    subject = builder.entity(args[0])
    payload = builder.data(args[1])
    origin = builder.entity(args[2]) if len(args) == 3 else ANONYMOUS_ENTITY
    if isinstance(payload, Special) and payload.kind.is_consent and kind not in (
        ActionKind.RECEIVE,
        ActionKind.RECEIVEAT,
    ):
        raise builder.error(f"consents can only be received, not used in {keyword}")
    return Action(kind, subject, payload, origin, time)


def _build_access(tree: Tree, line: int) -> tuple[str, tuple[str, ...]]:
    builder = _TermBuilder(line)
    args = tree.children[1:]
    if len(args) != 2 or not isinstance(args[1], Tree) or args[1].data != "setlit":
        raise builder.error("expected HASACCESSTO(entity,{e1,e2,...})")
    entity = builder.entity(args[0]).name
    targets = tuple(builder.entity(t).name for t in args[1].children)
    return entity, targets


def parse_architecture(source_text: str, max_nesting: int | None = None) -> Architecture:
    """
    Parse an architecture: one action or HASACCESSTO statement per line.

    Spaces are not allowed inside a statement; ``#`` starts a comment.
    Compounds nested deeper than ``max_nesting`` produce a warning.

    :param source_text: DSL source
    :param max_nesting: compound nesting bound, ``DPV_MAX_NESTING`` by default
    :return: the parsed architecture
    :raises ArchitectureSyntaxError: on any syntax error, with the line number
    """
    bound = default_max_nesting() if max_nesting is None else max_nesting
    actions: list[Action] = []
    access: dict[str, tuple[str, ...]] = {}
    warnings: list[str] = []

    for number, raw in enumerate(source_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for column, char in enumerate(line, start=1):
            if char.isspace():
                raise ArchitectureSyntaxError(
                    "no space character is allowed in an action", number, column
                )
        try:
            tree = _PARSER.parse(line).children[0]
        except UnexpectedInput as ex:
            raise ArchitectureSyntaxError(
                f"cannot parse '{line}'", number, getattr(ex, "column", None)
            ) from ex

        if str(tree.children[0]) == _ACCESS_KEYWORD:
            entity, targets = _build_access(tree, number)
            access[entity] = tuple(dict.fromkeys(access.get(entity, ()) + targets))
            continue

        action = _build_action(tree, number)
        if action in actions:
            _LOG.warning("line %d: duplicate action %s ignored", number, action)
            continue
        depth = nesting_depth(action.payload)
        if depth > bound:
            message = f"line {number}: {depth} nested data types exceed the supported {bound}"
            _LOG.warning(message)
            warnings.append(message)
        actions.append(action)

    components = {a.subject.name for a in actions} | set(RESERVED_ENTITIES)
    for entity, targets in access.items():
        for name in (entity, *targets):
            if name not in components:
                _LOG.warning("HASACCESSTO names '%s' which no action mentions", name)

    _LOG.debug("parsed architecture: %d actions, %d access entries", len(actions), len(access))
    return Architecture(tuple(actions), access, tuple(warnings))


def render_architecture(arch: Architecture) -> str:
    """Render an architecture back to the action syntax, one statement per line."""
    lines = [str(a) for a in arch.actions]
    for entity, targets in arch.has_access_to.items():
        lines.append(f"{_ACCESS_KEYWORD}({entity},{{{','.join(targets)}}})")
    return "\n".join(lines) + "\n" if lines else ""


# ---------------------------------------------------------------------------
# Well-formedness and partition
# ---------------------------------------------------------------------------


def _holds(container: Term, data: Term, include_crypto: bool) -> bool:
    return any(
        sub == data for _, sub in subterm_positions(container, include_crypto=include_crypto)
    )


def _is_source_of(source: Action, data: Term) -> bool:
    if not source.kind.is_source:
        return False
    if isinstance(source.payload, Special) and source.payload.kind.is_consent:
        return False
    if source.kind in (ActionKind.RECEIVE, ActionKind.RECEIVEAT):
        return _holds(source.payload, data, include_crypto=False)
    return _holds(source.payload, data, include_crypto=True)


def check_well_formed_arch(arch: Architecture) -> list[ArchViolation]:
    """
    Check that stored data has a source and deleted data is stored.

    A STORE(AT) needs an OWN/CREATE(AT)/CALCULATE(AT) of data containing the
    stored data, or a RECEIVE(AT) containing it outside crypto bodies. A
    DELETE/DELETEWITHIN needs a STORE(AT) of data containing it.

    :param arch: parsed architecture
    :return: one violation per offending action, in file order
    """
    violations = []
    stores = [a for a in arch.actions if a.kind in (ActionKind.STORE, ActionKind.STOREAT)]
    for action in arch.actions:
        if action in stores:
            if not any(_is_source_of(s, action.payload) for s in arch.actions):
                violations.append(
                    ArchViolation(
                        action, f"{action.payload} is stored but never owned, received or created"
                    )
                )
        elif action.kind in (ActionKind.DELETE, ActionKind.DELETEWITHIN):
            if not any(_holds(s.payload, action.payload, True) for s in stores):
                violations.append(
                    ArchViolation(action, f"{action.payload} is deleted but never stored")
                )
    for violation in violations:
        _LOG.debug("architecture violation: %s", violation)
    return violations


def partition_architecture(arch: Architecture) -> ArchPartition:
    """
    Split the architecture facts by the Time(), P() and Meta() constructs.

    A fact may be in several of the first three subsets; facts with none of
    the constructs form the last one.
    """
    timed, pseudo, meta, plain = [], [], [], []
    for item in arch.facts():
        flags = (
            mentions(item, SpecialKind.TIME),
            mentions(item, SpecialKind.P),
            mentions(item, SpecialKind.META),
        )
        for flag, target in zip(flags, (timed, pseudo, meta)):
            if flag:
                target.append(item)
        if not any(flags):
            plain.append(item)
    return ArchPartition(tuple(timed), tuple(pseudo), tuple(meta), tuple(plain))
