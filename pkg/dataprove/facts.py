"""
Forward fact generation from an architecture and a policy.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import logging
from dataclasses import dataclass

from .architecture import Architecture
from .definitions import ActionKind, Predicate, SpecialKind
from .policy import Policy
from .terms import Compound, Fact, SimpleType, Special, disjoint, subterm_positions

_LOG = logging.getLogger(__name__)

CREATEAT = SimpleType("createat")
CALCULATEAT = SimpleType("calculateat")


@dataclass(frozen=True)
class PurposeFacts:
    """Purpose facts derived from create and calculate actions."""

    cpurp: tuple[Fact, ...] = ()
    upurp: tuple[Fact, ...] = ()
    fwpurp: tuple[Fact, ...] = ()

    def for_predicate(self, predicate: str) -> tuple[Fact, ...]:
        """Purpose set holding facts of the given predicate."""
        return {
            Predicate.CPURPOSE.value: self.cpurp,
            Predicate.UPURPOSE.value: self.upurp,
            Predicate.FWPURPOSE.value: self.fwpurp,
        }.get(predicate, ())

    def all(self) -> tuple[Fact, ...]:
        """Every purpose fact."""
        return self.cpurp + self.upurp + self.fwpurp


def generate_trivial_facts(arch: Architecture) -> tuple[Fact, ...]:
    """
    Generate the trivial HAS, LINK and LINKUNIQUE facts.

    For every OWN/RECEIVE(AT)/CREATE(AT)/CALCULATE(AT) whose payload is a
    non-crypto compound, the subject has every piece of data at a proper
    position of the payload (compound arguments and Meta, recursively, never
    inside crypto) and can link every two pieces at disjoint positions.
    STORE(AT) and DELETE actions generate nothing.

    :param arch: parsed architecture
    :return: facts without duplicates, in generation order
    """
    facts: dict[Fact, None] = {}
    for action in arch.actions:
        if not action.kind.is_source or not isinstance(action.payload, Compound):
            continue
        positions = list(subterm_positions(action.payload, strict=True))
        for _, sub in positions:
            facts[Fact(Predicate.HAS, (action.subject, sub))] = None
        pairs = [
            (first, second)
            for i, (path_a, first) in enumerate(positions)
            for path_b, second in positions[i + 1 :]
            if disjoint(path_a, path_b) and first != second
        ]
        for predicate in (Predicate.LINK, Predicate.LINKUNIQUE):
            for first, second in pairs:
                facts[Fact(predicate, (action.subject, first, second))] = None
    _LOG.debug("generated %d trivial facts", len(facts))
    return tuple(facts)


def generate_purpose_facts(arch: Architecture) -> PurposeFacts:
    """
    Generate CPURPOSE, UPURPOSE and FWPURPOSE facts.

    CREATEAT gives CPURPOSE(payload,createat), CALCULATEAT gives
    UPURPOSE(payload,calculateat). A received Fwconsent(X,Eto) together with a
    CREATEAT/CALCULATEAT by Eto of a payload containing X gives
    FWPURPOSE(payload,createat/calculateat).
    """
    cpurp: dict[Fact, None] = {}
    upurp: dict[Fact, None] = {}
    fwpurp: dict[Fact, None] = {}
    verbs = {ActionKind.CREATEAT: CREATEAT, ActionKind.CALCULATEAT: CALCULATEAT}

    for action in arch.actions:
        if action.kind is ActionKind.CREATEAT:
            cpurp[Fact(Predicate.CPURPOSE, (action.payload, CREATEAT))] = None
        elif action.kind is ActionKind.CALCULATEAT:
            upurp[Fact(Predicate.UPURPOSE, (action.payload, CALCULATEAT))] = None

    forwarded = [
        a.payload
        for a in arch.actions
        if a.kind is ActionKind.RECEIVEAT
        and isinstance(a.payload, Special)
        and a.payload.kind is SpecialKind.FWCONSENT
    ]
    for consent in forwarded:
        data, recipient = consent.args
        for action in arch.actions:
            if action.kind not in verbs or action.subject != recipient:
                continue
            inside = subterm_positions(action.payload, include_crypto=True)
            if any(sub == data for _, sub in inside):
                fwpurp[Fact(Predicate.FWPURPOSE, (action.payload, verbs[action.kind]))] = None

    return PurposeFacts(tuple(cpurp), tuple(upurp), tuple(fwpurp))


def generate_unique_facts(policy: Policy) -> tuple[Fact, ...]:
    """One UNIQUE(group) fact per data group flagged unique."""
    return tuple(Fact(Predicate.UNIQUE, (SimpleType(g),)) for g in policy.unique_groups)
