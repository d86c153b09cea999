"""
Run-time semantics of services and architectures, and trace compliance.

A policy trace lists the events of one service run, one per line, with the
time first::

    cconsentat(2020.01.21.11:15,client,personalinfo)
    collectat(2020.01.21.11:20,client,personalinfo,Peter)

Folding a trace over the initial state gives the data state of the service;
checking it against a policy reports every compliance rule the run breaks.

Architecture traces use the lowercase action names, e.g.
``own(t_all,client,name,Peter)`` or
``createat(2020.01.21.11:25,sp,account,Account(name,address))``.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import logging
import re
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from functools import reduce
from typing import Any

from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedInput

from .definitions import (
    CONSENT_KINDS,
    SERVICE_PROVIDER,
    ArchEventKind,
    ComplianceRule,
    CryptoKind,
    PolicyEventKind,
    SpecialKind,
    TimeUnit,
)
from .errors import InputError, TraceSyntaxError
from .policy import Policy, Purpose, SubPolicyBundle
from .terms import Compound, Crypto, SimpleType, Term, TimeValue

_LOG = logging.getLogger(__name__)

ALL_THE_TIME = "t_all"
CONSENT_GIVEN = "given"
"""Value written to a consent slot by a policy consent event."""

_TIME_FORMAT = "%Y.%m.%d.%H:%M"


@dataclass(frozen=True, order=True)
class Timestamp:
    """Time of an event: ``yyyy.mm.dd.hh:mm``, or ``t_all`` for all the time."""

    minutes: int
    text: str = field(compare=False)

    @classmethod
    def parse(cls, text: str) -> "Timestamp":
        """
        Parse a timestamp. ``t_all`` sorts before every concrete time.

        :raises ValueError: on malformed input.
        """
        if text == ALL_THE_TIME:
            return cls(-1, text)
        moment = datetime.strptime(text, _TIME_FORMAT)
        return cls((moment - datetime.min) // timedelta(minutes=1), text)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Slot:
    """Key of a data state: a data type and its origin, or a consent on them."""

    data_type: str
    origin: str
    consent: SpecialKind | None = None

    def __str__(self) -> str:
        data = f"({self.data_type},{self.origin})"
        return f"{self.consent.value}{data}" if self.consent else data


def _consent_slots(data_type: str, origin: str) -> list[Slot]:
    return [Slot(data_type, origin, kind) for kind in CONSENT_KINDS]


@dataclass(frozen=True)
class DataState:
    """
    Values of the slots of every entity, and the time of the last event.

    Slots without a value are undefined. Updates return a new state and leave
    the original untouched.
    """

    entities: dict[str, dict[Slot, str]] = field(default_factory=dict)
    time: Timestamp | None = None

    def value(self, entity: str, slot: Slot) -> str | None:
        """Value of ``slot`` for ``entity``, None when undefined."""
        return self.entities.get(entity, {}).get(slot)

    def local(self, entity: str) -> dict[Slot, str]:
        """Defined slots of ``entity``, least recently assigned first."""
        return dict(self.entities.get(entity, {}))

    def assign(self, entity: str, slot: Slot, value: str | None, time: Timestamp):
        """Return a state where ``slot`` of ``entity`` holds ``value``."""
        local = self.local(entity)
        local.pop(slot, None)
        if value is not None:
            local[slot] = value
        return replace(self, entities={**self.entities, entity: local}, time=time)

    def clear(self, entity: str, slots: Iterable[Slot], time: Timestamp):
        """Return a state where ``slots`` of ``entity`` are undefined."""
        local = self.local(entity)
        for slot in slots:
            local.pop(slot, None)
        return replace(self, entities={**self.entities, entity: local}, time=time)

    def render(self) -> str:
        """Defined slots, one per line and sorted, followed by the time."""
        lines = [
            f"{entity}: {slot} = {value}"
            for entity in sorted(self.entities)
            for slot, value in sorted(self.entities[entity].items(), key=lambda i: str(i[0]))
        ]
        lines.append(f"time: {self.time if self.time is not None else 'undefined'}")
        return "\n".join(lines) + "\n"


class ServiceState(DataState):
    """Data state of a service: one data state per entity plus the time variable."""


class GlobalState(DataState):
    """Global state of an architecture: the local state of each component plus the time."""


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

# Arguments after the time, in trace order.
_POLICY_FIELDS: dict[PolicyEventKind, tuple[str, ...]] = {
    PolicyEventKind.CCONSENTAT: ("origin", "data_type"),
    PolicyEventKind.COLLECTAT: ("origin", "data_type", "value"),
    PolicyEventKind.UCONSENTAT: ("origin", "data_type"),
    PolicyEventKind.CREATEAT: ("origin", "derived_type", "data_type", "value"),
    PolicyEventKind.CALCULATEAT: ("origin", "derived_type", "data_type", "value"),
    PolicyEventKind.SCONSENTAT: ("origin", "data_type"),
    PolicyEventKind.STOREAT: ("origin", "data_type", "value", "place"),
    PolicyEventKind.DELETEAT: ("origin", "data_type", "value", "place"),
    PolicyEventKind.FWCONSENTAT: ("recipient", "origin", "data_type"),
    PolicyEventKind.FORWARDAT: ("recipient", "origin", "data_type", "value"),
}

_OPTIONAL_FIELDS = ("value", "recipient", "place", "derived_type")


@dataclass(frozen=True)
class PolicyEvent:
    """One event of a service run."""

    kind: PolicyEventKind
    time: Timestamp
    origin: str
    data_type: str
    value: str | None = None
    recipient: str | None = None
    """Entity the data is forwarded to."""
    place: str | None = None
    derived_type: str | None = None
    """Type of the data a create or calculate event produces."""
    line: int | None = field(default=None, compare=False)

    def __post_init__(self):
        """Check the fields against the schema of the event kind."""
        expected = _POLICY_FIELDS[self.kind]
        for name in _OPTIONAL_FIELDS:
            if (getattr(self, name) is None) == (name in expected):
                state = "needs" if name in expected else "takes no"
                raise ValueError(f"{self.kind.value} {state} {name.replace('_', ' ')}")

    @property
    def datum(self) -> tuple[str, str, str | None]:
        """The piece of data the event is about: origin, type and value."""
        return self.origin, self.data_type, self.value

    def __str__(self) -> str:
        args = [_quote(getattr(self, name)) for name in _POLICY_FIELDS[self.kind]]
        return f"{self.kind.value}({self.time},{','.join(args)})"


_ARCH_FIELDS: dict[ArchEventKind, tuple[str, ...]] = {
    ArchEventKind.OWN: ("entity", "data", "value"),
    ArchEventKind.CALCULATEAT: ("entity", "data", "term"),
    ArchEventKind.CREATEAT: ("entity", "data", "term"),
    ArchEventKind.RECEIVEAT: ("entity", "data", "origin", "value"),
    ArchEventKind.STOREAT: ("entity", "data", "origin", "value"),
    ArchEventKind.DELETEWITHIN: ("entity", "data", "origin", "value", "delay"),
}


@dataclass(frozen=True)
class ArchEvent:
    """One event of an architecture run."""

    kind: ArchEventKind
    time: Timestamp
    entity: str
    data_type: str
    origin: str | None = None
    """Sender of the data; the acting entity itself for own, create and calculate."""
    value: str | None = None
    consent: SpecialKind | None = None
    term: Term | None = None
    """Payload of create and calculate, over data type names."""
    delay: TimeValue | None = None
    line: int | None = field(default=None, compare=False)

    @property
    def slot(self) -> Slot:
        """Slot of the acting entity the event writes."""
        return Slot(self.data_type, self.origin or self.entity, self.consent)

    def __str__(self) -> str:
        data = f"{self.consent.value}({self.data_type})" if self.consent else self.data_type
        rendered = {
            "entity": self.entity,
            "data": data,
            "origin": self.origin,
            "value": _quote(self.value),
            "term": str(self.term),
            "delay": str(self.delay),
        }
        args = [rendered[name] for name in _ARCH_FIELDS[self.kind]]
        return f"{self.kind.value}({self.time},{','.join(args)})"


_WORD = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.+\-]*")


def _quote(value: str | None) -> str:
    if value is None or _WORD.fullmatch(value):
        return str(value)
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_GRAMMAR = r"""
    start: WORD "(" TIMESTAMP ("," _arg)* ")"
    _arg: call | WORD | STRING
    call: WORD "(" _arg ("," _arg)* ")"

    TIMESTAMP.2: /[0-9]{4}\.[0-9]{2}\.[0-9]{2}\.[0-9]{2}:[0-9]{2}/ | "t_all"
    WORD: /[A-Za-z0-9_][A-Za-z0-9_.+\-]*/
    STRING: /"(\\.|[^"\\])*"/

    %ignore /[ \t]+/
"""

_PARSER = Lark(_GRAMMAR, parser="lalr")

_CRYPTO = {k.value: k for k in CryptoKind}
_CONSENTS = {k.value: k for k in CONSENT_KINDS}


def _atom(node, line: int) -> str:
    if isinstance(node, Tree):
        raise TraceSyntaxError(f"expected a name or value, got '{_text(node)}'", line)
    if node.type == "STRING":
        return re.sub(r"\\(.)", r"\1", str(node)[1:-1])
    return str(node)


def _text(node) -> str:
    if isinstance(node, Token):
        return str(node)
    name, *args = node.children
    return f"{name}({','.join(_text(a) for a in args)})"


def _timestamp(token: Token, line: int) -> Timestamp:
    try:
        return Timestamp.parse(str(token))
    except ValueError as ex:
        raise TraceSyntaxError(f"invalid time '{token}'", line) from ex


def _term(node, line: int) -> Term:
    if isinstance(node, Token):
        name = _atom(node, line)
        if not name[0].islower():
            raise TraceSyntaxError(f"'{name}' is not a data type name", line)
        return SimpleType(name)
    name, *args = node.children
    built = tuple(_term(a, line) for a in args)
    if str(name) in _CRYPTO:
        kind = _CRYPTO[str(name)]
        if len(built) != kind.arity:
            raise TraceSyntaxError(f"{name} takes {kind.arity} argument(s)", line)
        return Crypto(kind, built)
    if not str(name)[0].isupper():
        raise TraceSyntaxError(f"'{name}' cannot take arguments", line)
    return Compound(str(name), built)


def _split(tree: Tree, kinds: Mapping[str, Any], schema: Mapping, line: int):
    keyword, stamp, *args = tree.children
    kind = kinds.get(str(keyword))
    if kind is None:
        raise TraceSyntaxError(f"unknown event '{keyword}'", line)
    names = schema[kind]
    if len(args) != len(names):
        raise TraceSyntaxError(
            f"{kind.value} takes {len(names)} arguments after the time, got {len(args)}", line
        )
    return kind, _timestamp(stamp, line), dict(zip(names, args))


def _policy_event(tree: Tree, line: int) -> PolicyEvent:
    kinds = {k.value: k for k in PolicyEventKind}
    kind, time, args = _split(tree, kinds, _POLICY_FIELDS, line)
    if time.text == ALL_THE_TIME:
        raise TraceSyntaxError(f"{kind.value} needs a concrete time", line)
    values = {name: _atom(node, line) for name, node in args.items()}
    return PolicyEvent(kind, time, line=line, **values)


def _arch_event(tree: Tree, line: int) -> ArchEvent:
    kinds = {k.value: k for k in ArchEventKind}
    kind, time, args = _split(tree, kinds, _ARCH_FIELDS, line)
    data = args["data"]
    consent = None
    if isinstance(data, Tree):
        name, *inner = data.children
        if str(name) not in _CONSENTS or len(inner) != 1 or kind is not ArchEventKind.RECEIVEAT:
            raise TraceSyntaxError(f"unexpected data '{_text(data)}' in {kind.value}", line)
        consent = _CONSENTS[str(name)]
        data = inner[0]
    delay = None
    if "delay" in args:
        try:
            delay = TimeValue.parse(_atom(args["delay"], line))
        except ValueError as ex:
            raise TraceSyntaxError(f"invalid delay '{_text(args['delay'])}'", line) from ex
    return ArchEvent(
        kind,
        time,
        _atom(args["entity"], line),
        _atom(data, line),
        origin=_atom(args["origin"], line) if "origin" in args else None,
        value=_atom(args["value"], line) if "value" in args else None,
        consent=consent,
        term=_term(args["term"], line) if "term" in args else None,
        delay=delay,
        line=line,
    )


def _parse_lines(source_text: str, build: Callable[[Tree, int], Any]) -> list:
    events = []
    for number, raw in enumerate(source_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            tree = _PARSER.parse(line)
        except UnexpectedInput as ex:
            raise TraceSyntaxError(
                f"cannot parse '{line}'", number, getattr(ex, "column", None)
            ) from ex
        try:
            events.append(build(tree, number))
        except ValueError as ex:
            raise TraceSyntaxError(str(ex), number) from ex
    return events


def parse_trace(source_text: str) -> list[PolicyEvent]:
    """
    Parse a policy trace: one event per line, ``#`` starts a comment.

    :param source_text: trace source
    :return: events in file order
    :raises TraceSyntaxError: on an unparseable line, with its line number
    """
    events = _parse_lines(source_text, _policy_event)
    _LOG.debug("parsed trace: %d events", len(events))
    return events


def parse_arch_trace(source_text: str) -> list[ArchEvent]:
    """
    Parse an architecture trace.

    :raises TraceSyntaxError: on an unparseable line, with its line number
    """
    events = _parse_lines(source_text, _arch_event)
    _LOG.debug("parsed architecture trace: %d events", len(events))
    return events


def render_trace(events: Iterable[PolicyEvent | ArchEvent]) -> str:
    """Render events back to the trace syntax, one per line."""
    return "".join(f"{e}\n" for e in events)


# ---------------------------------------------------------------------------
# Semantics
# ---------------------------------------------------------------------------


def apply_policy_event(event: PolicyEvent, state: ServiceState) -> ServiceState:
    """
    Apply one policy event to the data state of a service.

    Consent events and collection or use of data update the state of the
    service provider, ``storeat`` the state of the place and ``forwardat`` the
    state of the recipient. ``deleteat`` makes the data undefined at the place,
    together with the consents given on it. The time becomes the event time.

    :raises InputError: on an event kind without semantics
    """
    kind = event.kind
    if kind.consent is not None:
        slot = Slot(event.data_type, event.origin, kind.consent)
        return state.assign(SERVICE_PROVIDER, slot, CONSENT_GIVEN, event.time)
    data = Slot(event.data_type, event.origin)
    if kind is PolicyEventKind.COLLECTAT:
        return state.assign(SERVICE_PROVIDER, data, event.value, event.time)
    if kind.is_use:
        derived = Slot(event.derived_type, event.origin)
        return state.assign(SERVICE_PROVIDER, derived, event.value, event.time)
    if kind is PolicyEventKind.STOREAT:
        return state.assign(event.place, data, event.value, event.time)
    if kind is PolicyEventKind.FORWARDAT:
        return state.assign(event.recipient, data, event.value, event.time)
    if kind is PolicyEventKind.DELETEAT:
        consents = _consent_slots(event.data_type, event.origin)
        state = state.clear(event.place, [data, *consents], event.time)
        return state.clear(SERVICE_PROVIDER, consents, event.time)
    raise InputError(f"no semantics for event kind '{kind}'")


def run_trace(trace: Iterable[PolicyEvent], state: ServiceState | None = None) -> ServiceState:
    """Fold a policy trace over ``state``, the all-undefined state by default."""
    return reduce(lambda s, e: apply_policy_event(e, s), trace, state or ServiceState())


def evaluate(term: Term, local: Mapping[Slot, str]) -> str | None:
    """
    Evaluate a payload term under the local state of a component.

    A data type name takes the value most recently assigned to data of that
    type. The result is undefined as soon as one name is.
    """
    if isinstance(term, SimpleType):
        for slot in reversed(list(local)):
            if slot.consent is None and slot.data_type == term.name:
                return local[slot]
        return None
    if isinstance(term, (Compound, Crypto)):
        values = [evaluate(arg, local) for arg in term.args]
        if any(v is None for v in values):
            return None
        name = term.functor if isinstance(term, Compound) else term.kind.value
        return f"{name}({','.join(values)})"
    return None


def apply_arch_event(event: ArchEvent, state: GlobalState) -> GlobalState:
    """
    Apply one architecture event to the global state.

    :raises InputError: on an event kind without semantics
    """
    kind = event.kind
    if kind in (ArchEventKind.OWN, ArchEventKind.RECEIVEAT, ArchEventKind.STOREAT):
        return state.assign(event.entity, event.slot, event.value, event.time)
    if kind in (ArchEventKind.CREATEAT, ArchEventKind.CALCULATEAT):
        value = evaluate(event.term, state.local(event.entity))
        return state.assign(event.entity, event.slot, value, event.time)
    if kind is ArchEventKind.DELETEWITHIN:
        slots = [event.slot, *_consent_slots(event.data_type, event.slot.origin)]
        return state.clear(event.entity, slots, event.time)
    raise InputError(f"no semantics for event kind '{kind}'")


def run_arch_trace(trace: Iterable[ArchEvent], state: GlobalState | None = None) -> GlobalState:
    """Fold an architecture trace over ``state``, the all-undefined state by default."""
    return reduce(lambda s, e: apply_arch_event(e, s), trace, state or GlobalState())


# ---------------------------------------------------------------------------
# Compliance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComplianceViolation:
    """A compliance rule broken by a trace, with the events witnessing it."""

    rule: ComplianceRule
    data_type: str
    detail: str
    events: tuple[PolicyEvent, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        """Structured form used by the JSON rendering."""
        return {
            "rule": self.rule.value,
            "title": self.rule.title,
            "dataType": self.data_type,
            "detail": self.detail,
            "events": [str(e) for e in self.events],
            "lines": [e.line for e in self.events],
        }

    def __str__(self) -> str:
        return f"{self.rule.value} {self.rule.title} [{self.data_type}]: {self.detail}"


def _listed(event: PolicyEvent, purposes: Sequence[Purpose]) -> bool:
    return any(
        p.action.lower() == event.kind.value and p.result_type.lower() == event.derived_type.lower()
        for p in purposes
    )


def _span(minutes: int) -> str:
    parts = []
    for unit in TimeUnit:
        count, minutes = divmod(minutes, unit.minutes)
        if count:
            parts.append(f"{count}{unit.value}")
    return "+".join(parts) or "0m"


_ConsentKey = tuple[SpecialKind, str, str, str | None]
_Datum = tuple[str, str, str | None]


class _ComplianceAudit:
    """Walk a trace once, keeping what each rule needs to remember."""

    def __init__(self, policy: Policy):
        self._policy = policy
        self._consents: dict[_ConsentKey, PolicyEvent] = {}
        self._collected: dict[_Datum, PolicyEvent] = {}
        self._forwarded: dict[_Datum, PolicyEvent] = {}
        self._deletions: dict[_Datum, list[PolicyEvent]] = {}
        self._unknown: set[str] = set()
        self.violations: list[ComplianceViolation] = []
        self._handlers: dict[PolicyEventKind, Callable[[PolicyEvent, SubPolicyBundle], None]] = {
            PolicyEventKind.COLLECTAT: self._on_collect,
            PolicyEventKind.CREATEAT: self._on_use,
            PolicyEventKind.CALCULATEAT: self._on_use,
            PolicyEventKind.STOREAT: self._on_store,
            PolicyEventKind.DELETEAT: self._on_delete,
            PolicyEventKind.FORWARDAT: self._on_forward,
        }

    def _bundle(self, event: PolicyEvent) -> SubPolicyBundle | None:
        bundle = self._policy.bundles.get(event.data_type)
        if bundle is None and event.data_type not in self._unknown:
            self._unknown.add(event.data_type)
            _LOG.warning(
                "trace line %s: no policy for data type '%s', its events are not checked",
                event.line,
                event.data_type,
            )
        return bundle

    def _report(self, rule: ComplianceRule, detail: str, *events: PolicyEvent) -> None:
        violation = ComplianceViolation(rule, events[-1].data_type, detail, events)
        _LOG.debug("%s", violation)
        self.violations.append(violation)

    def _consented(self, kind: SpecialKind, event: PolicyEvent, recipient: str | None = None):
        return (kind, event.data_type, event.origin, recipient) in self._consents

    def check(self, event: PolicyEvent) -> None:
        bundle = self._bundle(event)
        if bundle is None:
            return
        consent = event.kind.consent
        if consent is not None:
            self._consents[(consent, event.data_type, event.origin, event.recipient)] = event
            return
        self._handlers[event.kind](event, bundle)

    def _on_collect(self, event: PolicyEvent, bundle: SubPolicyBundle) -> None:
        collection = bundle.collection
        if collection is not None and collection.consent_required:
            if not self._consented(SpecialKind.CCONSENT, event):
                self._report(
                    ComplianceRule.COLLECTION_CONSENT,
                    f"collected from {event.origin} before any collection consent",
                    event,
                )
        self._collected[event.datum] = event

    def _on_use(self, event: PolicyEvent, bundle: SubPolicyBundle) -> None:
        purpose = f"{event.kind.value}:{event.derived_type}"
        collected = self._collected.get(event.datum)
        if bundle.collection is not None and collected is not None:
            if not _listed(event, bundle.collection.purposes):
                self._report(
                    ComplianceRule.COLLECTION_PURPOSES,
                    f"{purpose} is not a collection purpose",
                    collected,
                    event,
                )
        usage = bundle.usage
        if usage is not None:
            if usage.consent_required and not self._consented(SpecialKind.UCONSENT, event):
                self._report(
                    ComplianceRule.USAGE_CONSENT,
                    f"used for {purpose} before any usage consent",
                    event,
                )
            if not _listed(event, usage.purposes):
                self._report(
                    ComplianceRule.USAGE_PURPOSES, f"{purpose} is not a usage purpose", event
                )
        forwarded = self._forwarded.get(event.datum)
        if bundle.transfer is not None and forwarded is not None:
            if not _listed(event, bundle.transfer.purposes):
                self._report(
                    ComplianceRule.TRANSFER_PURPOSES,
                    f"{purpose} is not a transfer purpose",
                    forwarded,
                    event,
                )

    def _on_store(self, event: PolicyEvent, bundle: SubPolicyBundle) -> None:
        storage = bundle.storage
        if storage is None:
            return
        if storage.consent_required and not self._consented(SpecialKind.SCONSENT, event):
            self._report(
                ComplianceRule.STORAGE_CONSENT,
                f"stored at {event.place} before any storage consent",
                event,
            )
        if event.place not in storage.where:
            self._report(
                ComplianceRule.STORAGE_PLACES,
                f"stored at {event.place}, allowed: {', '.join(storage.where) or 'none'}",
                event,
            )

    def _on_delete(self, event: PolicyEvent, bundle: SubPolicyBundle) -> None:
        self._deletions.setdefault(event.datum, []).append(event)
        deletion = bundle.deletion
        collected = self._collected.get(event.datum)
        if deletion is not None and isinstance(deletion.delay, TimeValue) and collected:
            start = collected.time.minutes
            if not start <= event.time.minutes <= start + deletion.delay.minutes:
                self._report(
                    ComplianceRule.DELETION_DELAY,
                    f"deleted from {event.place} {_span(event.time.minutes - start)} "
                    f"after collection, allowed: {deletion.delay}",
                    collected,
                    event,
                )
        # consents and transfers given before a deletion do not carry over
        for key in [k for k in self._consents if k[1:3] == (event.data_type, event.origin)]:
            del self._consents[key]
        self._forwarded.pop(event.datum, None)

    def _on_forward(self, event: PolicyEvent, bundle: SubPolicyBundle) -> None:
        transfer = bundle.transfer
        if transfer is not None:
            if transfer.consent_required and not self._consented(
                SpecialKind.FWCONSENT, event, event.recipient
            ):
                self._report(
                    ComplianceRule.TRANSFER_CONSENT,
                    f"forwarded to {event.recipient} before any transfer consent",
                    event,
                )
            if event.recipient not in transfer.to:
                self._report(
                    ComplianceRule.TRANSFER_TO,
                    f"forwarded to {event.recipient}, allowed: {', '.join(transfer.to) or 'none'}",
                    event,
                )
        self._forwarded[event.datum] = event

    def finish(self) -> list[ComplianceViolation]:
        for datum, events in self._deletions.items():
            deletion = self._policy.bundles[datum[1]].deletion
            if deletion is None:
                continue
            places = sorted({e.place for e in events})
            if set(places) != set(deletion.fromwhere):
                self._report(
                    ComplianceRule.DELETION_PLACES,
                    f"deleted from {', '.join(places)}, "
                    f"required: {', '.join(sorted(deletion.fromwhere))}",
                    *events,
                )
        return self.violations


def check_trace_compliance(trace: Sequence[PolicyEvent], policy: Policy) -> list[ComplianceViolation]:
    """
    Check a service trace against the policy.

    Rules of sub-policies that are absent for a data type are skipped. A
    consent counts from its own time on, so it covers actions at the same
    time wherever it is listed. A deletion ends every consent and transfer
    given on the deleted data. Place sets of deletions are compared once the
    whole trace has been read.

    :param trace: events, in time order
    :param policy: parsed policy
    :return: violations in the order they are detected
    """
    events = list(trace)
    if any(b.time < a.time for a, b in zip(events, events[1:])):
        _LOG.warning("trace is not in time order, checking it sorted by time")
    # stable: same-time events keep their order, consents first
    events.sort(key=lambda e: (e.time, e.kind.consent is None))
    audit = _ComplianceAudit(policy)
    for event in events:
        audit.check(event)
    violations = audit.finish()
    _LOG.info("trace checked: %d events, %d violations", len(events), len(violations))
    return violations
