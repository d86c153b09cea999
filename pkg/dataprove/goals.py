"""
Verification goal generation from a policy.

Every sub-policy that is written down becomes a set of goals, and every bundle
gets possession and linkage goals; each goal says whether the policy expects it
to be provable from the architecture. An optional architecture adds audit
goals: actions the policy does not allow for.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

from .architecture import Action, Architecture
from .definitions import (
    SERVICE_PROVIDER,
    STORAGE_PLACES,
    ActionKind,
    GoalKind,
    Polarity,
    Predicate,
    SpecialKind,
    SubPolicy,
    VarKind,
)
from .policy import Policy, Purpose, SubPolicyBundle
from .terms import (
    EntityConst,
    Fact,
    NonSpecificTime,
    SimpleType,
    Special,
    Term,
    TimeValue,
    Var,
    fact,
    special,
    subterm_positions,
    time_of,
    type_name,
)

_LOG = logging.getLogger(__name__)

TT = Var("TT", VarKind.TIME)
EV_FROM = Var("EV_from", VarKind.ENTITY)
SP = EntityConst(SERVICE_PROVIDER)

_PURPOSE_VERBS = {
    ActionKind.CREATEAT: (Predicate.CPURPOSE, SubPolicy.COLLECTION, GoalKind.CPURP),
    ActionKind.CALCULATEAT: (Predicate.UPURPOSE, SubPolicy.USAGE, GoalKind.UPURP),
}


@dataclass(frozen=True)
class Goal:
    """A verification goal and what the policy expects of it."""

    fact: Fact
    kind: GoalKind
    data_type: str
    sub_policy: SubPolicy
    polarity: Polarity
    alternatives: tuple[Fact, ...] = ()
    """Other action forms; the goal is proved if any of them is."""
    policy_delay: TimeValue | NonSpecificTime | None = None
    audit: bool = False
    """Derived from an architecture action rather than from a policy entry."""

    @property
    def facts(self) -> tuple[Fact, ...]:
        """The goal fact followed by its alternatives."""
        return (self.fact,) + self.alternatives

    @property
    def entity(self) -> str | None:
        """Name of the entity the goal is about, if its first argument is one."""
        first = self.fact.args[0] if self.fact.args else None
        return first.name if isinstance(first, EntityConst) else None

    def __str__(self) -> str:
        text = " | ".join(str(f) for f in self.facts)
        tag = "+" if self.polarity is Polarity.PROVABLE else "-"
        return f"[{tag}] {self.kind.value} {self.data_type}: {text}"


@dataclass(frozen=True)
class GoalSet:
    """All goals generated from a policy, with notes about skipped sub-policies."""

    goals: tuple[Goal, ...] = ()
    notes: tuple[str, ...] = ()

    def __iter__(self) -> Iterator[Goal]:
        return iter(self.goals)

    def __len__(self) -> int:
        return len(self.goals)

    def for_type(self, data_type: str) -> list[Goal]:
        """Goals generated for one data type."""
        return [g for g in self.goals if g.data_type == data_type]

    def of_kind(self, kind: GoalKind) -> list[Goal]:
        """Goals of one goal group."""
        return [g for g in self.goals if g.kind is kind]


@dataclass
class _Collector:
    data_type: str
    goals: list[Goal] = field(default_factory=list)
    seen: set[tuple[tuple[Fact, ...], Polarity]] = field(default_factory=set)

    def add(
        self,
        goal_fact: Fact,
        kind: GoalKind,
        sub_policy: SubPolicy,
        polarity: Polarity = Polarity.PROVABLE,
        **kwargs,
    ) -> None:
        goal = Goal(goal_fact, kind, self.data_type, sub_policy, polarity, **kwargs)
        key = (goal.facts, polarity)
        if key not in self.seen:
            self.seen.add(key)
            self.goals.append(goal)


def _received(entity: Term, payload: Term) -> tuple[Fact, Fact]:
    """Timed and untimed reception goal facts."""
    return (
        fact(ActionKind.RECEIVEAT, entity, payload, EV_FROM, time_of(TT)),
        fact(ActionKind.RECEIVE, entity, payload, EV_FROM),
    )


def _stored(place: Term, payload: Term) -> tuple[Fact, Fact]:
    return (
        fact(ActionKind.STOREAT, place, payload, EV_FROM, time_of(TT)),
        fact(ActionKind.STORE, place, payload, EV_FROM),
    )


def _contains(payload: Term, data: Term) -> bool:
    return any(sub == data for _, sub in subterm_positions(payload, include_crypto=True))


def _purpose_goals(
    out: _Collector,
    predicate: Predicate,
    kind: GoalKind,
    sub_policy: SubPolicy,
    purposes: Iterable[Purpose],
) -> None:
    for purpose in purposes:
        out.add(
            fact(predicate, SimpleType(purpose.result_type), SimpleType(purpose.action)),
            kind,
            sub_policy,
        )


def _consent_audit(out: _Collector, consent: Special, kind: GoalKind, sub_policy: SubPolicy):
    timed, untimed = _received(SP, consent)
    out.add(timed, kind, sub_policy, Polarity.UNPROVABLE, alternatives=(untimed,), audit=True)


def _collection_usage(out: _Collector, bundle: SubPolicyBundle, theta: SimpleType) -> None:
    for policy_part, predicate, consent_kind, goal_kinds, sub_policy in (
        (
            bundle.collection,
            Predicate.CCONSENTCOLLECTED,
            SpecialKind.CCONSENT,
            (GoalKind.CCONS, GoalKind.CPURP),
            SubPolicy.COLLECTION,
        ),
        (
            bundle.usage,
            Predicate.UCONSENTCOLLECTED,
            SpecialKind.UCONSENT,
            (GoalKind.UCONS, GoalKind.UPURP),
            SubPolicy.USAGE,
        ),
    ):
        if policy_part is None:
            continue
        if policy_part.consent_required:
            out.add(fact(predicate, SP, theta), goal_kinds[0], sub_policy)
        else:
            _consent_audit(out, special(consent_kind, theta), goal_kinds[0], sub_policy)
        purpose_predicate = (
            Predicate.CPURPOSE if sub_policy is SubPolicy.COLLECTION else Predicate.UPURPOSE
        )
        _purpose_goals(out, purpose_predicate, goal_kinds[1], sub_policy, policy_part.purposes)


def _storage(out: _Collector, bundle: SubPolicyBundle, theta: SimpleType) -> None:
    storage = bundle.storage
    if storage is None:
        return
    if storage.consent_required:
        out.add(fact(Predicate.STRCONSENTCOLLECTED, SP, theta), GoalKind.SCONS, SubPolicy.STORAGE)
    else:
        _consent_audit(
            out, special(SpecialKind.SCONSENT, theta), GoalKind.SCONS, SubPolicy.STORAGE
        )
    for place in storage.where:
        timed, untimed = _stored(EntityConst(place), theta)
        out.add(timed, GoalKind.PLACES, SubPolicy.STORAGE, alternatives=(untimed,))


def _possessors(place: str, arch: Architecture | None) -> list[str]:
    if arch is not None:
        owners = arch.owners_of(place)
    else:
        owners = [SERVICE_PROVIDER] if place in STORAGE_PLACES else []
    return owners or [place]


def _deletion(
    out: _Collector, bundle: SubPolicyBundle, theta: SimpleType, arch: Architecture | None
) -> None:
    deletion = bundle.deletion
    if deletion is None:
        return
    delay = deletion.delay
    for place in deletion.fromwhere:
        entity = EntityConst(place)
        polarity = Polarity.PROVABLE
        if bundle.has is not None and not all(
            bundle.may_have(e) for e in _possessors(place, arch)
        ):
            polarity = Polarity.UNPROVABLE
        out.add(
            fact(Predicate.HASUPTO, entity, theta, time_of(delay)),
            GoalKind.HASUPTO,
            SubPolicy.DELETION,
            polarity,
            policy_delay=delay,
        )
        out.add(
            fact(ActionKind.DELETEWITHIN, entity, theta, EV_FROM, time_of(delay)),
            GoalKind.WITHIN,
            SubPolicy.DELETION,
            alternatives=(fact(ActionKind.DELETE, entity, theta, EV_FROM),),
            policy_delay=delay,
        )


def _transfer(out: _Collector, bundle: SubPolicyBundle, theta: SimpleType) -> None:
    transfer = bundle.transfer
    if transfer is None:
        return
    for recipient in transfer.to:
        entity = EntityConst(recipient)
        timed, untimed = _received(entity, theta)
        out.add(timed, GoalKind.FWTO, SubPolicy.TRANSFER, alternatives=(untimed,))
        if transfer.consent_required:
            out.add(
                fact(Predicate.FWCONSENTCOLLECTED, SP, theta, entity),
                GoalKind.FWCONS,
                SubPolicy.TRANSFER,
            )
        else:
            _consent_audit(
                out,
                special(SpecialKind.FWCONSENT, theta, entity),
                GoalKind.FWCONS,
                SubPolicy.TRANSFER,
            )
    _purpose_goals(
        out, Predicate.FWPURPOSE, GoalKind.FWPURP, SubPolicy.TRANSFER, transfer.purposes
    )


def _possession(
    out: _Collector, bundle: SubPolicyBundle, theta: SimpleType, entities: Iterable[str]
) -> None:
    # without a HAS list no entity may have θ
    for entity in entities:
        polarity = Polarity.PROVABLE if bundle.may_have(entity) else Polarity.UNPROVABLE
        out.add(fact(Predicate.HAS, EntityConst(entity), theta), GoalKind.HAS, SubPolicy.HAS, polarity)


def _link_polarities(bundle: SubPolicyBundle, entity: str, other: str) -> tuple[Polarity, Polarity]:
    """Polarity of the LINK and LINKUNIQUE goals for one entity and type pair."""
    link = unique = Polarity.UNPROVABLE
    for permit in bundle.link_permit:
        if permit.entity == entity and permit.other_type == other:
            link = Polarity.PROVABLE
            if permit.unique_allowed:
                unique = Polarity.PROVABLE
    for forbid in bundle.link_forbid:
        if forbid.entity == entity and forbid.other_type == other and forbid.only_unique:
            link = Polarity.PROVABLE
            unique = Polarity.UNPROVABLE
    return link, unique


def _connection(
    out: _Collector,
    bundle: SubPolicyBundle,
    theta: SimpleType,
    entities: Iterable[str],
    data_types: Iterable[str],
) -> None:
    others = [t for t in data_types if t != theta.name]
    for entity in entities:
        subject = EntityConst(entity)
        for other in others:
            link, unique = _link_polarities(bundle, entity, other)
            out.add(
                fact(Predicate.LINK, subject, theta, SimpleType(other)),
                GoalKind.LINK,
                SubPolicy.LINK,
                link,
            )
            out.add(
                fact(Predicate.LINKUNIQUE, subject, theta, SimpleType(other)),
                GoalKind.LINK,
                SubPolicy.LINK,
                unique,
            )


def _audit(
    out: _Collector, bundle: SubPolicyBundle, theta: SimpleType, arch: Architecture
) -> None:
    """Goals for architecture actions on θ the written-down sub-policies do not allow."""
    actions: list[Action] = [a for a in arch.actions if _contains(a.payload, theta)]

    if bundle.storage is not None:
        allowed = set(bundle.storage.where)
        for action in actions:
            if action.kind in (ActionKind.STORE, ActionKind.STOREAT):
                if action.subject.name not in allowed:
                    timed, untimed = _stored(action.subject, theta)
                    out.add(
                        timed,
                        GoalKind.PLACES,
                        SubPolicy.STORAGE,
                        Polarity.UNPROVABLE,
                        alternatives=(untimed,),
                        audit=True,
                    )

    if bundle.transfer is not None:
        allowed = set(bundle.transfer.to) | {SERVICE_PROVIDER}
        allowed |= arch.storage_places(SERVICE_PROVIDER)
        if bundle.storage is not None:
            allowed |= set(bundle.storage.where)
        for action in actions:
            if action.kind in (ActionKind.RECEIVE, ActionKind.RECEIVEAT):
                if action.subject.name not in allowed:
                    timed, untimed = _received(action.subject, theta)
                    out.add(
                        timed,
                        GoalKind.FWTO,
                        SubPolicy.TRANSFER,
                        Polarity.UNPROVABLE,
                        alternatives=(untimed,),
                        audit=True,
                    )

    for action in actions:
        verb = _PURPOSE_VERBS.get(action.kind)
        if verb is None:
            continue
        predicate, sub_policy, kind = verb
        part = bundle.collection if sub_policy is SubPolicy.COLLECTION else bundle.usage
        if part is None:
            continue
        listed = {
            (p.action.lower(), p.result_type.lower()) for p in part.purposes
        }
        act = action.kind.value.lower()
        if (act, type_name(action.payload).lower()) in listed:
            continue
        out.add(
            fact(predicate, action.payload, SimpleType(act)),
            kind,
            sub_policy,
            Polarity.UNPROVABLE,
            audit=True,
        )


_NOTED = (SubPolicy.COLLECTION, SubPolicy.USAGE)


def _notes(bundle: SubPolicyBundle) -> list[str]:
    """Notes for absent consent sub-policies; other absent ones are only logged."""
    present = set(bundle.present())
    for sub in (SubPolicy.STORAGE, SubPolicy.DELETION, SubPolicy.TRANSFER):
        if sub not in present:
            _LOG.debug("%s: no %s sub-policy", bundle.data_type, sub.value)
    return [
        f"{bundle.data_type}: no {sub.value} sub-policy, its requirements are not checked"
        for sub in _NOTED
        if sub not in present
    ]


def data_types(policy: Policy) -> list[str]:
    """Data groups followed by bundle types that are not groups, in declaration order."""
    names = [g.group_name for g in policy.groups]
    names += [t for t in policy.bundles if t not in names]
    return names


def generate_goals(
    policy: Policy,
    declared_entities: Iterable[str] | None = None,
    arch: Architecture | None = None,
) -> GoalSet:
    """
    Generate the verification goal set of a policy.

    :param policy: parsed policy
    :param declared_entities: entities for the possession and connection goals;
                              defaults to sp and the policy's ENTITY lines
    :param arch: architecture for the audit goals and storage-place owners;
                 without it only policy-derived goals are generated
    :return: the goals of every bundle in policy order and the notes for
             collection and usage sub-policies that are not written down
    """
    entities = list(declared_entities) if declared_entities is not None else policy.entity_names
    types = data_types(policy)
    goals: list[Goal] = []
    notes: list[str] = []
    for data_type, bundle in policy.bundles.items():
        theta = SimpleType(data_type)
        out = _Collector(data_type)
        _collection_usage(out, bundle, theta)
        _storage(out, bundle, theta)
        _deletion(out, bundle, theta, arch)
        _transfer(out, bundle, theta)
        _possession(out, bundle, theta, entities)
        _connection(out, bundle, theta, entities, types)
        if arch is not None:
            _audit(out, bundle, theta, arch)
        goals.extend(out.goals)
        notes.extend(_notes(bundle))
    _LOG.debug("generated %d goals, %d notes", len(goals), len(notes))
    return GoalSet(tuple(goals), tuple(notes))
