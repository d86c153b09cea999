"""
The fixed catalog of inference rules.

Rules read ``HEAD ⊢ TAIL1, ..., TAILn``: the head holds if every tail fact can
be proved. The catalog is built once and shared read-only; every resolution
step works on a freshened copy whose variables cannot clash with the goal.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

from collections.abc import Iterator
from dataclasses import dataclass, field
from functools import lru_cache

from .definitions import (
    TRUSTED,
    ActionKind,
    CryptoKind,
    Predicate,
    RuleSet,
    SpecialKind,
    VarKind,
)
from .terms import (
    DS,
    Anytype,
    EntityConst,
    Fact,
    Term,
    Var,
    apply,
    crypto,
    fact,
    rename,
    special,
    time_of,
    unify,
    variables,
)

# Rule variables, named as they are printed in the catalog
EV = Var("EV", VarKind.ENTITY)
EV_FROM = Var("EV_from", VarKind.ENTITY)
EV_TO = Var("EV_to", VarKind.ENTITY)
EV_PLACE = Var("EV_place", VarKind.ENTITY)
TH = Var("θV")
TH1 = Var("θV1")
TH2 = Var("θV2")
TH3 = Var("θV3")
TH_REST = Var("θV'")
TV = Var("TV", VarKind.TIME)
DD = Var("DD", VarKind.DELAY)
K = Var("K", VarKind.KEY)
PK = Var("PK", VarKind.KEY)
A = Var("A", VarKind.FUNCTOR)

_TRUSTED = EntityConst(TRUSTED)


@dataclass(frozen=True)
class InferenceRule:
    """A Horn-style inference rule."""

    name: str
    rule_set: RuleSet
    head: Fact
    tail: tuple[Fact, ...]
    depth_guarded: bool = False
    """Fail the branch if a sub-goal exceeds the crypto depth bound."""
    storage_place: tuple[str, str] | None = None
    """(place variable, owner variable): the place must be the owner or one of its storage places."""
    suffix: str = ""
    """Freshening suffix appended to every variable name; empty in the catalog."""

    @property
    def head_predicate(self) -> str:
        """Predicate of the head."""
        return self.head.predicate

    @property
    def variables(self) -> list[Var]:
        """Variables of the rule in order of first occurrence."""
        seen: dict[str, Var] = {}
        for item in (self.head,) + self.tail:
            for var in variables(item):
                seen.setdefault(var.name, var)
        return list(seen.values())

    @property
    def slot_semantics(self) -> dict[str, str]:
        """How each data slot of the tail is matched, keyed by variable name."""
        semantics: dict[str, str] = {}

        def visit(term, mode: str):
            if isinstance(term, Var):
                semantics.setdefault(term.name, mode)
            elif isinstance(term, Anytype):
                inner = "plain"
                if term.contains:
                    inner = "Anytypeinccrypto containment" if term.include_crypto else "Anytype containment"
                for slot in term.slots:
                    visit(slot, inner)
            else:
                for arg in getattr(term, "args", ()):
                    visit(arg, mode)

        for item in self.tail:
            if item.predicate == Predicate.CRYPTHAS.value:
                semantics[str(item.args[1])] = "CRYPTHAS condition"
                continue
            visit(item, "plain")
        return semantics

    def __str__(self) -> str:
        return f"{self.name}. {self.head} ⊢ {', '.join(str(t) for t in self.tail)}"


@dataclass(frozen=True)
class RuleSets:
    """The rule sets, in catalog order."""

    dpr: tuple[InferenceRule, ...] = ()
    has_up_to: tuple[InferenceRule, ...] = ()
    has: tuple[InferenceRule, ...] = ()
    crypt_has: tuple[InferenceRule, ...] = ()
    link: tuple[InferenceRule, ...] = ()
    link_unique: tuple[InferenceRule, ...] = ()
    trivial: tuple[InferenceRule, ...] = ()
    _by_predicate: dict[str, tuple[InferenceRule, ...]] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        """Index catalog rules by head predicate; trivial rules come last."""
        index: dict[str, list[InferenceRule]] = {}
        for rule in self.all():
            index.setdefault(rule.head_predicate, []).append(rule)
        object.__setattr__(self, "_by_predicate", {k: tuple(v) for k, v in index.items()})

    def all(self) -> tuple[InferenceRule, ...]:
        """Every rule: catalog order, trivial rules last."""
        return (
            self.dpr
            + self.has_up_to
            + self.has
            + self.crypt_has
            + self.link
            + self.link_unique
            + self.trivial
        )

    def for_predicate(self, predicate: str) -> tuple[InferenceRule, ...]:
        """Rules whose head has the given predicate, in the order they are tried."""
        return self._by_predicate.get(predicate, ())

    def by_name(self, name: str) -> InferenceRule:
        """
        Look up a rule by name.

        :raises KeyError: if there is no such rule.
        """
        for rule in self.all():
            if rule.name == name:
                return rule
        raise KeyError(name)

    def named(self, rule_set: RuleSet) -> tuple[InferenceRule, ...]:
        """Rules of one set."""
        return tuple(r for r in self.all() if r.rule_set is rule_set)


def _data(value: Term) -> tuple[Term, Var]:
    return value, EV_FROM


def _contains(*slots: Term, include_crypto: bool = False, strict: bool = False) -> Anytype:
    return Anytype(tuple(slots), contains=True, include_crypto=include_crypto, strict=strict)


def _shape(*slots: Term, rest: Var | None = None, functor: Var | None = None) -> Anytype:
    return Anytype(tuple(slots), functor=functor, rest=rest)


def _has(entity: Term, data: Term) -> Fact:
    return fact(Predicate.HAS, entity, data)


def _dpr_rules() -> list[InferenceRule]:
    def rule(name, head, *tail, **kwargs):
        return InferenceRule(name, RuleSet.DPR, head, tuple(tail), **kwargs)

    fw_consent = special(SpecialKind.FWCONSENT, TH, EV_TO)
    c_consent = special(SpecialKind.CCONSENT, TH)
    u_consent = special(SpecialKind.UCONSENT, TH)
    s_consent = special(SpecialKind.SCONSENT, TH)
    when = time_of(TV)
    inside = _contains(TH)
    inside_crypto = _contains(TH, include_crypto=True)

    def received(entity, payload):
        return fact(ActionKind.RECEIVEAT, entity, payload, EV_FROM, when)

    return [
        rule(
            "D1",
            fact(Predicate.FWCONSENTCOLLECTED, EV, TH, EV_TO),
            received(EV, fw_consent),
            received(EV_TO, TH),
        ),
        rule(
            "D2",
            fact(Predicate.CCONSENTCOLLECTED, EV, TH),
            received(EV, c_consent),
            received(EV, TH),
        ),
        rule(
            "D3",
            fact(Predicate.UCONSENTCOLLECTED, EV, TH),
            received(EV, u_consent),
            fact(ActionKind.CREATEAT, EV, inside, when),
        ),
        rule(
            "D4",
            fact(Predicate.UCONSENTCOLLECTED, EV, TH),
            received(EV, u_consent),
            fact(ActionKind.CALCULATEAT, EV, inside, when),
        ),
        rule(
            "D5",
            fact(Predicate.STRCONSENTCOLLECTED, EV, TH),
            received(EV, s_consent),
            fact(ActionKind.STOREAT, EV_PLACE, TH, EV_FROM, when),
            storage_place=(EV_PLACE.name, EV.name),
        ),
        rule(
            "D6",
            fact(Predicate.FWCONSENTCOLLECTED, EV, TH, EV_TO),
            received(EV, fw_consent),
            received(EV_TO, inside_crypto),
        ),
        rule(
            "D7",
            fact(Predicate.CCONSENTCOLLECTED, EV, TH),
            received(EV, c_consent),
            received(EV, inside_crypto),
        ),
    ]


def _possession_rules() -> tuple[list[InferenceRule], list[InferenceRule], list[InferenceRule]]:
    when = time_of(TV)

    def has_rule(name, *tail, **kwargs):
        return InferenceRule(name, RuleSet.HAS, _has(EV, TH), tuple(tail), **kwargs)

    def pseudonym_rule(name, rule_set):
        head = _has(_TRUSTED, _shape(DS, rest=TH, functor=A))
        tail = _has(_TRUSTED, _shape(special(SpecialKind.P, DS), rest=TH, functor=A))
        return InferenceRule(name, rule_set, head, (tail,))

    has_up_to_head = fact(Predicate.HASUPTO, EV, TH, time_of(DD))
    deleted = fact(ActionKind.DELETEWITHIN, EV, TH, EV_FROM, time_of(DD))
    has_up_to = [
        InferenceRule(
            "P1",
            RuleSet.HAS_UP_TO,
            has_up_to_head,
            (fact(ActionKind.STOREAT, EV, TH, EV_FROM, when), deleted),
        ),
        pseudonym_rule("P2", RuleSet.HAS_UP_TO),
    ]

    has = [
        has_rule("P3", fact(ActionKind.OWN, EV, TH)),
        has_rule("P4", fact(ActionKind.RECEIVEAT, EV, TH, EV_FROM, when)),
        has_rule("P5", fact(ActionKind.STOREAT, EV, TH, EV_FROM, when)),
        has_rule("P6", fact(ActionKind.CREATEAT, EV, TH, when)),
        has_rule("P7", fact(ActionKind.CALCULATEAT, EV, TH, when)),
        has_rule("P8", _has(EV, crypto(CryptoKind.SENC, TH, K)), _has(EV, K), depth_guarded=True),
        has_rule("P9", _has(EV, crypto(CryptoKind.MAC, TH, K)), _has(EV, K), depth_guarded=True),
        has_rule(
            "P10",
            _has(EV, crypto(CryptoKind.AENC, TH, PK)),
            _has(EV, crypto(CryptoKind.SK, PK)),
            depth_guarded=True,
        ),
        InferenceRule(
            "P11",
            RuleSet.HAS,
            has_up_to_head,
            (fact(ActionKind.STORE, EV, TH, EV_FROM), deleted),
        ),
        # shape slots match in any position, so P12 also covers the pseudonym
        # in second place and moved between places (P13, P14)
        pseudonym_rule("P12", RuleSet.HAS),
        has_rule("P15", fact(ActionKind.RECEIVE, EV, TH, EV_FROM)),
        has_rule("P16", fact(ActionKind.STORE, EV, TH, EV_FROM)),
        has_rule("P17", fact(ActionKind.CREATE, EV, TH)),
        has_rule("P18", fact(ActionKind.CALCULATE, EV, TH)),
    ]

    crypt_head = fact(Predicate.CRYPTHAS, EV, TH)
    crypt_has = [
        InferenceRule(
            name,
            RuleSet.CRYPT_HAS,
            crypt_head,
            (_has(EV, crypto(kind, TH, key)), _has(EV, secret)),
            depth_guarded=True,
        )
        for name, kind, key, secret in (
            ("C1", CryptoKind.SENC, K, K),
            ("C2", CryptoKind.MAC, K, K),
            ("C3", CryptoKind.AENC, PK, crypto(CryptoKind.SK, PK)),
        )
    ]
    return has_up_to, has, crypt_has


# Slot orders of the second record for L1-L4 and whether the head is swapped
_LINK_BASES = (
    ((TH2, TH3), False),
    ((TH3, TH2), False),
    ((TH2, TH3), True),
    ((TH3, TH2), True),
)


def _crypt_variants(second: tuple[Term, Term]) -> Iterator[tuple[str, tuple[Term, Term], list[Var]]]:
    """
    Yield the /b, /c and /d variants of a second-record slot pair.

    /b wraps the last slot in crypto-aware containment, /c the first one and
    /d both; each wrapped variable needs a CRYPTHAS side condition.
    """
    first, last = second
    yield "b", (first, _contains(last, include_crypto=True)), [last]
    yield "c", (_contains(first, include_crypto=True), last), [first]
    yield "d", (
        _contains(first, include_crypto=True),
        _contains(last, include_crypto=True),
    ), [first, last]


def _linkage_rules(predicate: Predicate, prefix: str, rule_set: RuleSet) -> list[InferenceRule]:
    unique = predicate is Predicate.LINKUNIQUE
    rules: list[InferenceRule] = []
    if not unique:
        meta = special(SpecialKind.META, TH3)
        rules.append(
            InferenceRule(
                "L0",
                rule_set,
                fact(predicate, EV, TH1, TH2),
                (
                    _has(EV, _shape(TH1, meta, rest=TH)),
                    _has(EV, _shape(TH2, meta, rest=TH_REST)),
                ),
            )
        )

    # L5-L8 / U5-U8 repeat L1-L4 / U1-U4 with the first record's slots swapped
    firsts = ((TH1, TH3), (TH3, TH1))
    for group, first_slots in enumerate(firsts):
        for offset, (second_slots, swapped) in enumerate(_LINK_BASES):
            number = group * 4 + offset + 1
            head = fact(predicate, EV, TH2, TH1) if swapped else fact(predicate, EV, TH1, TH2)
            first_has = _has(EV, _shape(*first_slots, rest=TH))
            tail_end = (fact(Predicate.UNIQUE, TH3),) if unique else ()
            rules.append(
                InferenceRule(
                    f"{prefix}{number}",
                    rule_set,
                    head,
                    (first_has, _has(EV, _shape(*second_slots, rest=TH_REST))) + tail_end,
                )
            )
            for variant, slots, wrapped in _crypt_variants(second_slots):
                conditions = tuple(fact(Predicate.CRYPTHAS, EV, v) for v in wrapped)
                rules.append(
                    InferenceRule(
                        f"{prefix}{number}/{variant}",
                        rule_set,
                        head,
                        (first_has, _has(EV, _shape(*slots, rest=TH_REST)))
                        + tail_end
                        + conditions,
                    )
                )
    return rules


def _trivial_rules() -> list[InferenceRule]:
    return [
        InferenceRule(
            "T1",
            RuleSet.TRIVIAL,
            _has(EV, TH),
            (_has(EV, _contains(TH, strict=True)),),
        ),
        InferenceRule(
            "T2",
            RuleSet.TRIVIAL,
            fact(Predicate.LINK, EV, TH1, TH2),
            (_has(EV, _contains(TH1, TH2)),),
        ),
        InferenceRule(
            "T3",
            RuleSet.TRIVIAL,
            fact(Predicate.LINKUNIQUE, EV, TH1, TH2),
            (_has(EV, _contains(TH1, TH2)),),
        ),
    ]


@lru_cache(maxsize=1)
def build_rulesets() -> RuleSets:
    """
    Build the complete, immutable rule catalog.

    The result is cached; every caller shares the same instance.
    """
    has_up_to, has, crypt_has = _possession_rules()
    return RuleSets(
        dpr=tuple(_dpr_rules()),
        has_up_to=tuple(has_up_to),
        has=tuple(has),
        crypt_has=tuple(crypt_has),
        link=tuple(_linkage_rules(Predicate.LINK, "L", RuleSet.LINK)),
        link_unique=tuple(_linkage_rules(Predicate.LINKUNIQUE, "U", RuleSet.LINK_UNIQUE)),
        trivial=tuple(_trivial_rules()),
    )


def freshen_rule(rule: InferenceRule, counter: Iterator[int]) -> InferenceRule:
    """
    Rename every variable of a rule apart.

    :param rule: catalog rule
    :param counter: source of unique integers, e.g. ``itertools.count()``
    :return: a copy whose variable names carry a new ``#n`` suffix; a rule
             without variables is returned unchanged
    """
    names = [v.name for v in rule.variables]
    if not names:
        return rule
    suffix = f"#{next(counter)}"
    mapping = {name: name + suffix for name in names}
    return InferenceRule(
        rule.name,
        rule.rule_set,
        rename(rule.head, mapping),
        tuple(rename(t, mapping) for t in rule.tail),
        depth_guarded=rule.depth_guarded,
        storage_place=rule.storage_place,
        suffix=suffix,
    )


def resolvent(rule: InferenceRule, goal: Fact, counter: Iterator[int]) -> list[Fact] | None:
    """
    Compute ``goal ∘ rule``: the rule's tail under the first unifier of goal and head.

    :return: the instantiated sub-goals, or None if the goal does not unify
             with the head.
    """
    fresh = freshen_rule(rule, counter)
    subst = unify(goal, fresh.head)
    if subst is None:
        return None
    return [apply(subst, t) for t in fresh.tail]
