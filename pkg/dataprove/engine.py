"""
Backward-resolution proof engine.

A goal is proved by resolving it against the rule catalog until every open
sub-goal is closed by an architecture action, a trivial fact, a purpose fact
or a UNIQUE fact. Nested crypto is explored up to a configurable depth.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import itertools
import logging
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field, replace
from typing import Any

from .architecture import ArchPartition, Architecture, partition_architecture
from .definitions import (
    PURPOSE_PREDICATES,
    ActionKind,
    Outcome,
    Predicate,
    RuleSet,
    SpecialKind,
    VarKind,
    default_max_crypto_depth,
)
from .errors import InputError, ResolutionLimitError
from .facts import (
    PurposeFacts,
    generate_purpose_facts,
    generate_trivial_facts,
    generate_unique_facts,
)
from .policy import Policy
from .rules import InferenceRule, RuleSets, build_rulesets, freshen_rule
from .terms import (
    EMPTY,
    Anytype,
    EntityConst,
    Fact,
    SimpleType,
    Special,
    Substitution,
    Term,
    Var,
    apply,
    crypto_depth,
    has_pattern,
    is_ground,
    mentions,
    rename,
    type_name,
    unify,
    unify_all,
    variables,
    walk,
)

_LOG = logging.getLogger(__name__)

_ACTIONS = {k.value for k in ActionKind}
_PURPOSES = {p.value for p in PURPOSE_PREDICATES}
_RULE_HEADS = {
    Predicate.HAS.value,
    Predicate.HASUPTO.value,
    Predicate.CRYPTHAS.value,
    Predicate.LINK.value,
    Predicate.LINKUNIQUE.value,
    Predicate.CCONSENTCOLLECTED.value,
    Predicate.UCONSENTCOLLECTED.value,
    Predicate.STRCONSENTCOLLECTED.value,
    Predicate.FWCONSENTCOLLECTED.value,
}
_LINKS = (Predicate.LINK.value, Predicate.LINKUNIQUE.value)
_FALLBACK = (Predicate.HAS.value, Predicate.HASUPTO.value) + _LINKS

ARCH_DELAY = "DD_a"


@dataclass(frozen=True)
class Derivation:
    """
    Proof tree.

    Inner nodes are rule applications with the rule's bindings, in the rule's
    own variable names; leaves record the fact that closed the goal and where
    that fact comes from.
    """

    goal: Fact
    rule: str | None = None
    bindings: dict[str, Term] = field(default_factory=dict)
    children: tuple["Derivation", ...] = ()
    source: str | None = None
    """Leaf origin: architecture, trivial, purpose or unique."""
    fact: Fact | None = None

    @property
    def depth(self) -> int:
        """Number of rule applications on the longest root-to-leaf path."""
        if self.rule is None:
            return 0
        return 1 + max((c.depth for c in self.children), default=0)

    def leaves(self) -> Iterator["Derivation"]:
        """Leaves in left-to-right order."""
        if self.rule is None:
            yield self
        for child in self.children:
            yield from child.leaves()

    def rules_used(self) -> list[str]:
        """Rule names in pre-order."""
        names = [self.rule] if self.rule is not None else []
        for child in self.children:
            names.extend(child.rules_used())
        return names

    def map_terms(self, func: Callable[[Any], Any]) -> "Derivation":
        """Apply ``func`` to every fact and binding of the tree."""
        return Derivation(
            func(self.goal),
            self.rule,
            {k: func(v) for k, v in self.bindings.items()},
            tuple(c.map_terms(func) for c in self.children),
            self.source,
            self.fact,
        )

    def to_dict(self) -> dict[str, Any]:
        """Plain-data form for structured reports."""
        data: dict[str, Any] = {"goal": str(self.goal)}
        if self.rule is not None:
            data["rule"] = self.rule
            data["bindings"] = {k: str(v) for k, v in self.bindings.items()}
            data["children"] = [c.to_dict() for c in self.children]
        else:
            data["source"] = self.source
            data["fact"] = str(self.fact)
        return data

    def render(self, indent: int = 0) -> list[str]:
        """Indented text lines, one per node."""
        pad = "  " * indent
        if self.rule is None:
            lines = [f"{pad}{self.goal}  [{self.source}: {self.fact}]"]
        else:
            bound = ", ".join(f"{k}↦{v}" for k, v in self.bindings.items())
            lines = [f"{pad}{self.goal}  by {self.rule} {{{bound}}}"]
        for child in self.children:
            lines.extend(child.render(indent + 1))
        return lines


@dataclass(frozen=True)
class Solution:
    """One way of proving a goal."""

    substitution: Substitution
    derivation: Derivation


@dataclass(frozen=True)
class ProofResult:
    """Outcome of proving one goal."""

    goal: Fact
    outcome: Outcome
    solutions: tuple[Solution, ...] = ()
    via_access_fallback: str | None = None
    """Entity substituted for the goal's entity through HasAccessTo."""
    steps: int = 0

    @property
    def proved(self) -> bool:
        """Whether the goal was proved."""
        return self.outcome is Outcome.PROVED

    @property
    def derivation(self) -> Derivation | None:
        """Derivation of the first solution; present iff proved."""
        return self.solutions[0].derivation if self.solutions else None

    @property
    def substitution(self) -> Substitution | None:
        """Substitution of the first solution."""
        return self.solutions[0].substitution if self.solutions else None


@dataclass(frozen=True)
class EngineInputs:
    """Everything the engine proves goals from."""

    rulesets: RuleSets
    trivial_facts: tuple[Fact, ...]
    partition: ArchPartition
    purposes: PurposeFacts = field(default_factory=PurposeFacts)
    unique_types: tuple[Fact, ...] = ()
    max_crypto_depth: int = 3
    has_access_to: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        """Validate the crypto depth."""
        if self.max_crypto_depth < 0:
            raise InputError(f"max crypto depth must not be negative: {self.max_crypto_depth}")

    def access(self, entity: str) -> tuple[str, ...]:
        """Components reachable from ``entity``."""
        return self.has_access_to.get(entity, ())

    def storage_places(self, entity: str) -> set[str]:
        """Places whose stored data ``entity`` possesses."""
        return Architecture(has_access_to=self.has_access_to).storage_places(entity)

    @classmethod
    def build(
        cls,
        arch: Architecture,
        policy: Policy | None = None,
        max_crypto_depth: int | None = None,
        rulesets: RuleSets | None = None,
    ) -> "EngineInputs":
        """
        Generate the engine inputs of an architecture and policy.

        :param arch: parsed architecture
        :param policy: parsed policy, source of the UNIQUE facts
        :param max_crypto_depth: crypto depth N; defaults to ``DPV_MAX_CRYPTO_DEPTH`` or 3
        :param rulesets: rule catalog, defaults to the built-in one
        """
        return cls(
            rulesets=rulesets or build_rulesets(),
            trivial_facts=generate_trivial_facts(arch),
            partition=partition_architecture(arch),
            purposes=generate_purpose_facts(arch),
            unique_types=generate_unique_facts(policy) if policy is not None else (),
            max_crypto_depth=(
                default_max_crypto_depth() if max_crypto_depth is None else max_crypto_depth
            ),
            has_access_to=dict(arch.has_access_to),
        )


@dataclass(frozen=True)
class _Answer:
    """A proved instance of a goal with its derivation."""

    instance: Fact
    derivation: Derivation

    def renamed(self, mapping: dict[str, str]) -> "_Answer":
        if not mapping:
            return self
        return _Answer(
            rename(self.instance, mapping),
            self.derivation.map_terms(lambda t: rename(t, mapping)),
        )


def _widen(goal: Fact) -> Fact:
    """Replace the data argument of an action goal by crypto-aware containment of it."""
    data = goal.args[1]
    if isinstance(data, Anytype):
        return goal
    pattern = Anytype((data,), contains=True, include_crypto=True)
    return Fact(goal.predicate, (goal.args[0], pattern) + goal.args[2:])


def _with_entity(goal: Fact, entity: str) -> Fact:
    return Fact(goal.predicate, (EntityConst(entity),) + goal.args[1:])


def _simple_data(goal: Fact) -> bool:
    """True if every data argument is a concrete term without patterns."""
    data = goal.args[1:3] if goal.predicate in _LINKS else goal.args[1:2]
    return all(not isinstance(d, Var) and not has_pattern(d) for d in data)


class ProofEngine:
    """
    Proof engine over one set of inputs.

    Answers are memoized per goal up to variable renaming, so an engine is
    meant to be reused for every goal of a verification run and discarded
    afterwards.
    """

    def __init__(self, inputs: EngineInputs, max_steps: int | None = None):
        """
        Create an engine.

        :param inputs: facts, rules and bounds to prove goals from
        :param max_steps: resolution-step ceiling; None for no ceiling
        """
        self._inputs = inputs
        self._max_steps = max_steps
        self._counter = itertools.count(1)
        self._memo: dict[Fact, list[_Answer]] = {}
        self._active: dict[Fact, int] = {}
        self._cut_low = math.inf
        self.steps = 0

    @property
    def inputs(self) -> EngineInputs:
        """Inputs the engine proves goals from."""
        return self._inputs

    # -- public operations ----------------------------------------------------

    def conformance_check(self, initgoal: Fact) -> ProofResult:
        """
        Prove a verification goal.

        Action goals are matched directly against the architecture, with the
        data argument matching any payload containing it. Purpose goals are
        looked up in the purpose facts. Everything else is resolved against
        the rule catalog. If that fails and the goal's entity has access to
        other components, the goal is retried for each of them in turn.

        :param initgoal: goal fact
        :return: the result with every solution found
        :raises InputError: if the goal predicate is not known to the engine.
        """
        predicate = initgoal.predicate
        if predicate not in _ACTIONS | _PURPOSES | _RULE_HEADS | {Predicate.UNIQUE.value}:
            raise InputError(f"no proof procedure for predicate {predicate}")
        start = self.steps
        solutions = self._prove_initgoal(initgoal)
        fallback = None
        if not solutions and predicate in _FALLBACK and isinstance(initgoal.args[0], EntityConst):
            for member in self._inputs.access(initgoal.args[0].name):
                _LOG.debug("retrying %s for %s through HasAccessTo", initgoal, member)
                solutions = self._prove_initgoal(_with_entity(initgoal, member))
                if solutions:
                    fallback = member
                    break
        outcome = Outcome.PROVED if solutions else Outcome.NOT_PROVED
        _LOG.debug("%s: %s in %d steps", initgoal, outcome.value, self.steps - start)
        return ProofResult(initgoal, outcome, tuple(solutions), fallback, self.steps - start)

    def resolve_goal_with_rule(self, rule: InferenceRule, goal: Fact) -> list[Solution]:
        """
        Prove a goal with one rule.

        :return: one solution per distinct proved instance; empty if the goal
                 does not unify with the head, the crypto depth bound is
                 exceeded or a sub-goal fails.
        """
        solutions = []
        for answer in self._apply_rule(rule, goal):
            subst = unify(goal, answer.instance)
            if subst is not None:
                solutions.append(Solution(subst, answer.derivation))
        return solutions

    def prove_against_architecture(
        self, goal: Fact, subset: tuple[Fact, ...] | None = None
    ) -> list[tuple[Substitution, Fact]]:
        """
        Match an action goal against architecture facts.

        :param goal: action-shaped goal
        :param subset: facts to search; by default the subset chosen by the
                       goal's Time(), P() and Meta() constructs
        :return: every successful substitution with the fact it matched
        """
        self._tick()
        facts = self._subset(goal) if subset is None else subset
        return [(s, item) for item in facts for s in unify_all(goal, item)]

    def check_unique(self, goal: Fact) -> list[tuple[Substitution, Fact]]:
        """Match a UNIQUE goal; UNIQUE(Meta(x)) holds if UNIQUE(x) does."""
        self._tick()
        target = goal.args[0]
        while isinstance(target, Special) and target.kind is SpecialKind.META:
            target = target.args[0]
        wanted = Fact(goal.predicate, (target,))
        return [
            (s, item) for item in self._inputs.unique_types for s in unify_all(wanted, item)
        ]

    def check_purpose(self, goal: Fact) -> list[tuple[Substitution, Fact]]:
        """Match a purpose goal by data type name and action, or structurally."""
        self._tick()
        wanted_type = goal.args[0]
        wanted_act = goal.args[1]
        found = []
        for item in self._inputs.purposes.for_predicate(goal.predicate):
            subst = unify(goal, item)
            if subst is None and isinstance(wanted_type, SimpleType):
                if (
                    type_name(item.args[0]).lower() == wanted_type.name.lower()
                    and item.args[1] == wanted_act
                ):
                    subst = EMPTY
            if subst is not None:
                found.append((subst, item))
        return found

    # -- internals ------------------------------------------------------------

    def _tick(self) -> None:
        self.steps += 1
        if self._max_steps is not None and self.steps > self._max_steps:
            raise ResolutionLimitError(f"more than {self._max_steps} resolution steps")

    def _subset(self, goal: Fact) -> tuple[Fact, ...]:
        partition = self._inputs.partition
        if mentions(goal, SpecialKind.TIME):
            return partition.arch_time
        facts = partition.untimed
        if mentions(goal, SpecialKind.P):
            facts = tuple(f for f in facts if f in partition.arch_pseudo)
        if mentions(goal, SpecialKind.META):
            facts = tuple(f for f in facts if f in partition.arch_meta)
        return facts

    def _prove_initgoal(self, initgoal: Fact) -> list[Solution]:
        predicate = initgoal.predicate
        if predicate in _ACTIONS:
            widened = _widen(initgoal)
            matches = self.prove_against_architecture(widened, self._inputs.partition.all())
            return [
                Solution(s, Derivation(apply(s, initgoal), source="architecture", fact=item))
                for s, item in matches
            ]
        if predicate in _PURPOSES:
            return [
                Solution(s, Derivation(initgoal, source="purpose", fact=item))
                for s, item in self.check_purpose(initgoal)
            ]
        solutions = []
        for answer in self._solve(initgoal):
            subst = unify(initgoal, answer.instance)
            if subst is not None:
                solutions.append(Solution(subst, answer.derivation))
        return solutions

    def _solve(self, goal: Fact) -> list[_Answer]:
        """Every distinct proved instance of ``goal``, memoized up to renaming."""
        names = {var.name: f"_{i}" for i, var in enumerate(variables(goal))}
        back = {v: k for k, v in names.items()}
        key = rename(goal, names)

        cached = self._memo.get(key)
        if cached is None:
            if key in self._active:
                self._cut_low = min(self._cut_low, self._active[key])
                return []
            depth = len(self._active)
            self._active[key] = depth
            outer_low, self._cut_low = self._cut_low, math.inf
            try:
                cached = self._compute(key)
            finally:
                del self._active[key]
            low = self._cut_low
            if low >= depth:
                self._memo[key] = cached
                low = math.inf
            self._cut_low = min(outer_low, low)
        return [a.renamed(back) for a in cached]

    def _compute(self, goal: Fact) -> list[_Answer]:
        first_only = is_ground(goal) and not has_pattern(goal)
        answers: dict[Fact, _Answer] = {}
        for answer in self._candidates(goal):
            answers.setdefault(answer.instance, answer)
            if first_only:
                break
        return list(answers.values())

    def _candidates(self, goal: Fact) -> Iterator[_Answer]:
        predicate = goal.predicate
        if predicate in _ACTIONS:
            for subst, item in self.prove_against_architecture(goal):
                instance = apply(subst, goal)
                yield _Answer(instance, Derivation(instance, source="architecture", fact=item))
            return
        if predicate == Predicate.UNIQUE.value:
            for subst, item in self.check_unique(goal):
                instance = apply(subst, goal)
                yield _Answer(instance, Derivation(instance, source="unique", fact=item))
            return
        if predicate in _PURPOSES:
            for subst, item in self.check_purpose(goal):
                instance = apply(subst, goal)
                yield _Answer(instance, Derivation(instance, source="purpose", fact=item))
            return
        yield from self._trivial(goal)
        for rule in self._inputs.rulesets.for_predicate(predicate):
            if rule.rule_set is RuleSet.TRIVIAL and not _simple_data(goal):
                continue
            yield from self._apply_rule(rule, goal)

    def _trivial(self, goal: Fact) -> Iterator[_Answer]:
        facts = [f for f in self._inputs.trivial_facts if f.predicate == goal.predicate]
        if not facts:
            return
        self._tick()
        for item in facts:
            candidates = [item]
            if goal.predicate in _LINKS:
                candidates.append(Fact(item.predicate, (item.args[0], item.args[2], item.args[1])))
            for candidate in candidates:
                for subst in unify_all(goal, candidate):
                    instance = apply(subst, goal)
                    yield _Answer(instance, Derivation(instance, source="trivial", fact=item))

    def _apply_rule(self, rule: InferenceRule, goal: Fact) -> Iterator[_Answer]:
        fresh = freshen_rule(rule, self._counter)
        self._tick()
        limit = self._inputs.max_crypto_depth
        for subst in unify_all(goal, fresh.head):
            if fresh.depth_guarded and any(
                crypto_depth(apply(subst, t)) > limit for t in fresh.tail
            ):
                _LOG.debug("%s on %s exceeds crypto depth %d", rule.name, goal, limit)
                continue
            for final, children in self._prove_tail(fresh.tail, subst, 0):
                if fresh.storage_place and not self._place_allowed(fresh, final):
                    continue
                instance = apply(final, goal)
                bindings = {}
                for var in rule.variables:
                    value = apply(final, Var(var.name + fresh.suffix, var.kind))
                    if not (isinstance(value, Var) and value.name.endswith(fresh.suffix)):
                        bindings[var.name] = value
                yield _Answer(instance, Derivation(instance, rule.name, bindings, tuple(children)))

    def _place_allowed(self, fresh: InferenceRule, subst: Substitution) -> bool:
        place_name, owner_name = fresh.storage_place
        place = walk(Var(place_name + fresh.suffix), subst)
        owner = walk(Var(owner_name + fresh.suffix), subst)
        if not isinstance(place, EntityConst) or not isinstance(owner, EntityConst):
            return False
        return place == owner or place.name in self._inputs.storage_places(owner.name)

    def _prove_tail(
        self, tail: tuple[Fact, ...], subst: Substitution, index: int
    ) -> Iterator[tuple[Substitution, list[Derivation]]]:
        """Prove tail facts left to right, trying every answer of each one."""
        if index == len(tail):
            yield subst, []
            return
        goal = apply(subst, tail[index])
        for answer in self._solve(goal):
            step = unify(goal, answer.instance, subst)
            if step is None:
                continue
            for final, rest in self._prove_tail(tail, step, index + 1):
                yield final, [answer.derivation] + rest


def conformance_check(
    initgoal: Fact, inputs: EngineInputs, max_steps: int | None = None
) -> ProofResult:
    """Prove one goal with a fresh engine."""
    return ProofEngine(inputs, max_steps).conformance_check(initgoal)


def relax_delay(goal: Fact, name: str = ARCH_DELAY) -> Fact:
    """Replace the Time() argument of a delay goal by a delay variable."""
    last = goal.args[-1]
    if not (isinstance(last, Special) and last.kind is SpecialKind.TIME):
        return goal
    relaxed = Special(SpecialKind.TIME, (Var(name, VarKind.DELAY),))
    return replace(goal, args=goal.args[:-1] + (relaxed,))
