"""
Symbolic terms, substitutions and unification.

Terms are immutable values. ``Anytype`` patterns stand for "some compound with
these pieces of data in it" and may unify with a concrete term in several
ways, so unification is exposed as a generator of unifiers (:func:`unify_all`)
next to the classic single-answer :func:`unify`.

:copyright: (c) 2023 by Unfolded Circle ApS.
:license: MPL-2.0, see LICENSE for more details.
"""

import re
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import permutations
from typing import TypeAlias, Union

from .definitions import (
    ANONYMOUS,
    DATA_SUBJECT,
    NON_SPECIFIC_TIME,
    CryptoKind,
    SpecialKind,
    TimeUnit,
    VarKind,
)

# ---------------------------------------------------------------------------
# Term types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Var:
    """Logic variable of a given kind."""

    name: str
    kind: VarKind = VarKind.DATA

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class SimpleType:
    """A simple data type such as ``name`` or ``spkey``."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class EntityConst:
    """A named entity, component or place."""

    name: str

    @property
    def is_anonymous(self) -> bool:
        """True for the placeholder origin of statements that omit it."""
        return self.name == ANONYMOUS

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class DataSubject:
    """The reserved identity of the data subject, ``ds``."""

    def __str__(self) -> str:
        return DATA_SUBJECT


@dataclass(frozen=True, slots=True)
class NonSpecificTime:
    """The reserved non-specific time token ``t``."""

    def __str__(self) -> str:
        return NON_SPECIFIC_TIME


_TVALUE_PART = re.compile(r"(\d+)(mo|y|w|d|h|m)")


@dataclass(frozen=True, slots=True)
class TimeValue:
    """A concrete time span such as ``8y`` or ``10y+6mo``."""

    components: tuple[tuple[int, TimeUnit], ...]

    def __post_init__(self):
        """Validate components."""
        if not self.components:
            raise ValueError("a time value needs at least one component")
        for count, _ in self.components:
            if count <= 0:
                raise ValueError(f"time value counts must be positive, got {count}")

    @classmethod
    def parse(cls, text: str) -> "TimeValue":
        """
        Parse the tvalue syntax, e.g. ``8y+6mo``.

        :raises ValueError: on malformed input.
        """
        components = []
        for part in text.split("+"):
            match = _TVALUE_PART.fullmatch(part)
            if match is None:
                raise ValueError(f"invalid time value: '{text}'")
            components.append((int(match.group(1)), TimeUnit(match.group(2))))
        return cls(tuple(components))

    @property
    def minutes(self) -> int:
        """Length in minutes."""
        return sum(count * unit.minutes for count, unit in self.components)

    def __str__(self) -> str:
        return "+".join(f"{count}{unit.value}" for count, unit in self.components)


@dataclass(frozen=True, slots=True)
class Functor:
    """Name of a compound constructor, as bound by a functor variable."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Compound:
    """User-defined compound data type, e.g. ``Account(name,address)``."""

    functor: str
    args: tuple["Term", ...]

    def __str__(self) -> str:
        return f"{self.functor}({_join(self.args)})"


@dataclass(frozen=True, slots=True)
class Crypto:
    """Cryptographic function application."""

    kind: CryptoKind
    args: tuple["Term", ...]

    def __str__(self) -> str:
        return f"{self.kind.value}({_join(self.args)})"


@dataclass(frozen=True, slots=True)
class Special:
    """Special function application: Time, P, Meta and the consents."""

    kind: SpecialKind
    args: tuple["Term", ...]

    def __str__(self) -> str:
        return f"{self.kind.value}({_join(self.args)})"


@dataclass(frozen=True, slots=True)
class Rest:
    """The arguments of a compound left over after a shape pattern matched."""

    args: tuple["Term", ...]

    def __str__(self) -> str:
        return f"..({_join(self.args)})"


@dataclass(frozen=True, slots=True)
class Anytype:
    """
    Pattern over compound data.

    In shape mode the pattern matches a non-crypto compound of any arity at
    least the number of slots, each slot taking a distinct argument position
    in any order; remaining arguments bind ``rest`` and the constructor name
    binds ``functor``. In containment mode every slot matches some subterm,
    slots taking pairwise disjoint positions.
    """

    slots: tuple["Term", ...]
    contains: bool = False
    include_crypto: bool = False
    strict: bool = False
    functor: Union[Var, Functor, None] = None
    rest: Union[Var, Rest, None] = None

    def __str__(self) -> str:
        if self.contains:
            name = "Anytypeinccrypto" if self.include_crypto else "Anytype"
            brackets = "<>" if self.strict else "[]"
            return f"{name}{brackets[0]}{_join(self.slots)}{brackets[1]}"
        name = str(self.functor) if self.functor is not None else "Anytype"
        rest = f";{self.rest}" if self.rest is not None else ""
        return f"{name}({_join(self.slots)}{rest})"


Term: TypeAlias = Union[
    Var,
    SimpleType,
    EntityConst,
    DataSubject,
    NonSpecificTime,
    TimeValue,
    Functor,
    Compound,
    Crypto,
    Special,
    Rest,
    Anytype,
]

DS = DataSubject()
ANY_TIME = NonSpecificTime()
ANONYMOUS_ENTITY = EntityConst(ANONYMOUS)

_APPLICATIONS = (Compound, Crypto, Special, Rest)


@dataclass(frozen=True, slots=True)
class Fact:
    """Logic atom ``PREDICATE(arg1,...,argn)``, used for facts and goals."""

    predicate: str
    args: tuple[Term, ...] = field(default=())

    def __post_init__(self):
        """Normalize enum predicates to their string value."""
        if isinstance(self.predicate, Enum):
            object.__setattr__(self, "predicate", self.predicate.value)

    def __str__(self) -> str:
        return f"{self.predicate}({_join(self.args)})"


def _join(args: Iterable[object]) -> str:
    return ",".join(str(arg) for arg in args)


def fact(predicate: str | Enum, *args: Term) -> Fact:
    """Shorthand constructor for a :class:`Fact`."""
    return Fact(predicate, tuple(args))


def compound(functor: str, *args: Term) -> Compound:
    """Shorthand constructor for a :class:`Compound`."""
    return Compound(functor, tuple(args))


def crypto(kind: CryptoKind, *args: Term) -> Crypto:
    """Shorthand constructor for a :class:`Crypto` application."""
    return Crypto(kind, tuple(args))


def special(kind: SpecialKind, *args: Term) -> Special:
    """Shorthand constructor for a :class:`Special` application."""
    return Special(kind, tuple(args))


def time_of(value: Term) -> Special:
    """Wrap a time term in ``Time()``."""
    return Special(SpecialKind.TIME, (value,))


# ---------------------------------------------------------------------------
# Substitutions
# ---------------------------------------------------------------------------


class Substitution(Mapping[str, Term]):
    """Immutable mapping from variable names to terms."""

    __slots__ = ("_bindings",)

    def __init__(self, bindings: Mapping[str, Term] | None = None):
        """Create a substitution from the given bindings."""
        self._bindings: dict[str, Term] = dict(bindings or {})

    def __getitem__(self, key: str) -> Term:
        return self._bindings[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._bindings)

    def __len__(self) -> int:
        return len(self._bindings)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}↦{v}" for k, v in self._bindings.items())
        return "{" + inner + "}"

    def bind(self, name: str, term: Term) -> "Substitution":
        """Return a copy extended with ``name ↦ term``."""
        bindings = dict(self._bindings)
        bindings[name] = term
        return Substitution(bindings)

    def resolved(self) -> "Substitution":
        """Return the idempotent form: every binding fully applied."""
        return Substitution({k: apply(self, v) for k, v in self._bindings.items()})

    def restrict(self, names: Iterable[str]) -> "Substitution":
        """Return the resolved bindings of the given variables only."""
        return Substitution(
            {n: apply(self, self._bindings[n]) for n in names if n in self._bindings}
        )


EMPTY = Substitution()


def walk(term: Term, subst: Mapping[str, Term]) -> Term:
    """Follow variable bindings until an unbound variable or a non-variable."""
    while isinstance(term, Var) and term.name in subst:
        term = subst[term.name]
    return term


def apply(subst: Mapping[str, Term], term):
    """
    Apply a substitution to a term or fact.

    Bound variables are replaced, recursively through their bindings; unbound
    variables are left untouched.
    """
    if not subst:
        return term
    if isinstance(term, Var):
        bound = subst.get(term.name)
        return term if bound is None else apply(subst, bound)
    if isinstance(term, Fact):
        return Fact(term.predicate, tuple(apply(subst, a) for a in term.args))
    if isinstance(term, _APPLICATIONS):
        return replace(term, args=tuple(apply(subst, a) for a in term.args))
    if isinstance(term, Anytype):
        return replace(
            term,
            slots=tuple(apply(subst, s) for s in term.slots),
            functor=apply(subst, term.functor) if term.functor is not None else None,
            rest=apply(subst, term.rest) if term.rest is not None else None,
        )
    return term


# ---------------------------------------------------------------------------
# Term inspection
# ---------------------------------------------------------------------------


def children(term) -> tuple:
    """Direct sub-terms of a term or fact."""
    if isinstance(term, (Fact, *_APPLICATIONS)):
        return term.args
    if isinstance(term, Anytype):
        extra = tuple(x for x in (term.functor, term.rest) if x is not None)
        return term.slots + extra
    return ()


def variables(term) -> list[Var]:
    """Variables of a term or fact in order of first occurrence."""
    seen: dict[str, Var] = {}

    def visit(node):
        if isinstance(node, Var):
            seen.setdefault(node.name, node)
        for child in children(node):
            visit(child)

    visit(term)
    return list(seen.values())


def is_ground(term) -> bool:
    """True if the term has no variables."""
    if isinstance(term, Var):
        return False
    return all(is_ground(c) for c in children(term))


def has_pattern(term) -> bool:
    """True if an ``Anytype`` pattern occurs in the term."""
    if isinstance(term, Anytype):
        return True
    return any(has_pattern(c) for c in children(term))


def mentions(term, kind: SpecialKind) -> bool:
    """True if a special function of the given kind occurs in the term."""
    if isinstance(term, Special) and term.kind is kind:
        return True
    return any(mentions(c, kind) for c in children(term))


def crypto_depth(term) -> int:
    """Maximum number of nested Senc/Aenc/Mac/Hash layers along any path."""
    inner = max((crypto_depth(c) for c in children(term)), default=0)
    if isinstance(term, Crypto) and term.kind.is_layer:
        return inner + 1
    return inner


def nesting_depth(term) -> int:
    """Maximum number of nested user compounds along any path."""
    inner = max((nesting_depth(c) for c in children(term)), default=0)
    return inner + 1 if isinstance(term, Compound) else inner


def type_name(term: Term) -> str:
    """Name of the data type a term denotes, used for purpose matching."""
    if isinstance(term, (SimpleType, Functor)):
        return term.name
    if isinstance(term, Compound):
        return term.functor
    if isinstance(term, (Crypto, Special)):
        return term.kind.value
    return str(term)


def subterm_positions(
    term: Term, include_crypto: bool = False, strict: bool = False
) -> Iterator[tuple[tuple[int, ...], Term]]:
    """
    Enumerate ``(path, subterm)`` positions of a term in pre-order.

    Descends through compound arguments and Meta; crypto bodies only when
    ``include_crypto`` is set. P(), Time and consent constructors are opaque.
    With ``strict`` the term itself is not reported.
    """

    def visit(node, path):
        yield path, node
        if isinstance(node, Compound) or (
            isinstance(node, Special) and node.kind is SpecialKind.META
        ):
            descend = True
        else:
            descend = include_crypto and isinstance(node, Crypto)
        if descend:
            for index, arg in enumerate(node.args):
                yield from visit(arg, path + (index,))

    for path, node in visit(term, ()):
        if strict and not path:
            continue
        yield path, node


def disjoint(path_a: tuple[int, ...], path_b: tuple[int, ...]) -> bool:
    """True if neither position lies inside the other."""
    shorter = min(len(path_a), len(path_b))
    return path_a[:shorter] != path_b[:shorter]


# ---------------------------------------------------------------------------
# Renaming
# ---------------------------------------------------------------------------


def rename(term, mapping: Mapping[str, str]):
    """Rename variables according to ``mapping``; others stay as they are."""
    if isinstance(term, Var):
        new = mapping.get(term.name)
        return term if new is None else Var(new, term.kind)
    if isinstance(term, Fact):
        return Fact(term.predicate, tuple(rename(a, mapping) for a in term.args))
    if isinstance(term, _APPLICATIONS):
        return replace(term, args=tuple(rename(a, mapping) for a in term.args))
    if isinstance(term, Anytype):
        return replace(
            term,
            slots=tuple(rename(s, mapping) for s in term.slots),
            functor=rename(term.functor, mapping) if term.functor is not None else None,
            rest=rename(term.rest, mapping) if term.rest is not None else None,
        )
    return term


def canonical(term):
    """
    Rename variables to ``_0``, ``_1``, ... in order of first occurrence.

    Two terms are equal up to variable renaming iff their canonical forms are
    equal.
    """
    names = {var.name: f"_{i}" for i, var in enumerate(variables(term))}
    return rename(term, names)


# ---------------------------------------------------------------------------
# Unification
# ---------------------------------------------------------------------------

_NARROWING = {(VarKind.DATA, VarKind.KEY), (VarKind.TIME, VarKind.DELAY)}


def accepts(kind: VarKind, term: Term) -> bool:
    """Whether a variable of ``kind`` may bind to the non-variable ``term``."""
    match kind:
        case VarKind.DATA:
            if isinstance(term, Special):
                return term.kind not in (SpecialKind.TIME, SpecialKind.P)
            return isinstance(term, (SimpleType, Compound, Crypto, Rest, Anytype))
        case VarKind.KEY:
            return isinstance(term, SimpleType)
        case VarKind.ENTITY:
            return isinstance(term, EntityConst)
        case VarKind.TIME:
            return isinstance(term, (NonSpecificTime, TimeValue))
        case VarKind.DELAY:
            return isinstance(term, TimeValue)
        case VarKind.FUNCTOR:
            return isinstance(term, Functor)
    return False


def _occurs(name: str, term: Term, subst: Mapping[str, Term]) -> bool:
    term = walk(term, subst)
    if isinstance(term, Var):
        return term.name == name
    return any(_occurs(name, c, subst) for c in children(term))


def _bind(var: Var, term: Term, subst: Substitution) -> Substitution | None:
    if isinstance(term, Var):
        if var.kind == term.kind:
            return subst.bind(var.name, term)
        if (var.kind, term.kind) in _NARROWING:
            return subst.bind(var.name, term)
        if (term.kind, var.kind) in _NARROWING:
            return subst.bind(term.name, var)
        return None
    if not accepts(var.kind, term) or _occurs(var.name, term, subst):
        return None
    return subst.bind(var.name, term)


def unify_all(a, b, subst: Substitution | None = None) -> Iterator[Substitution]:
    """
    Enumerate the unifiers of two terms or facts extending ``subst``.

    Pattern-free terms have at most one answer, the most general unifier.
    """
    yield from _unify(a, b, EMPTY if subst is None else subst)


def unify(a, b, subst: Substitution | None = None) -> Substitution | None:
    """Return the first unifier of ``a`` and ``b``, or None if there is none."""
    return next(unify_all(a, b, subst), None)


def _unify(a, b, subst: Substitution) -> Iterator[Substitution]:
    a = walk(a, subst)
    b = walk(b, subst)
    if a == b:
        yield subst
        return
    if isinstance(a, Var) or isinstance(b, Var):
        var, other = (a, b) if isinstance(a, Var) else (b, a)
        bound = _bind(var, other, subst)
        if bound is not None:
            yield bound
        return
    if isinstance(a, Anytype) and isinstance(b, Anytype):
        yield from _unify_patterns(a, b, subst)
        return
    if isinstance(a, Anytype) or isinstance(b, Anytype):
        pattern, other = (a, b) if isinstance(a, Anytype) else (b, a)
        yield from _match_pattern(pattern, other, subst)
        return
    if type(a) is not type(b):
        return
    if isinstance(a, Fact):
        if a.predicate == b.predicate and len(a.args) == len(b.args):
            yield from _unify_seq(a.args, b.args, subst)
    elif isinstance(a, Compound):
        if a.functor == b.functor and len(a.args) == len(b.args):
            yield from _unify_seq(a.args, b.args, subst)
    elif isinstance(a, (Crypto, Special)):
        if a.kind is b.kind and len(a.args) == len(b.args):
            yield from _unify_seq(a.args, b.args, subst)
    elif isinstance(a, Rest):
        if len(a.args) == len(b.args):
            yield from _unify_seq(a.args, b.args, subst)


def _unify_seq(xs, ys, subst: Substitution) -> Iterator[Substitution]:
    if not xs:
        yield subst
        return
    for step in _unify(xs[0], ys[0], subst):
        yield from _unify_seq(xs[1:], ys[1:], step)


def _unify_optional(a, b, subst: Substitution) -> Iterator[Substitution]:
    if a is None and b is None:
        yield subst
    elif a is not None and b is not None:
        yield from _unify(a, b, subst)


def _unify_patterns(a: Anytype, b: Anytype, subst: Substitution):
    flags_a = (a.contains, a.include_crypto, a.strict, len(a.slots))
    flags_b = (b.contains, b.include_crypto, b.strict, len(b.slots))
    if flags_a != flags_b:
        return
    for step in _unify_seq(a.slots, b.slots, subst):
        for step2 in _unify_optional(a.functor, b.functor, step):
            yield from _unify_optional(a.rest, b.rest, step2)


def _match_pattern(pattern: Anytype, term: Term, subst: Substitution):
    if pattern.contains:
        yield from _match_containment(pattern, term, subst)
    else:
        yield from _match_shape(pattern, term, subst)


def _match_shape(pattern: Anytype, term: Term, subst: Substitution):
    if not isinstance(term, Compound):
        return
    if pattern.functor is not None:
        subst = unify(pattern.functor, Functor(term.functor), subst)
        if subst is None:
            return
    arity, wanted = len(term.args), len(pattern.slots)
    if wanted > arity:
        return
    rest = walk(pattern.rest, subst) if pattern.rest is not None else None
    if isinstance(rest, Rest) and len(rest.args) != arity - wanted:
        return
    for chosen in permutations(range(arity), wanted):
        picked = tuple(term.args[i] for i in chosen)
        left = tuple(arg for i, arg in enumerate(term.args) if i not in chosen)
        for step in _unify_seq(pattern.slots, picked, subst):
            if pattern.rest is None:
                yield step
            else:
                yield from _unify_rest(pattern.rest, left, step)


def _unify_rest(rest: Term, left: tuple[Term, ...], subst: Substitution):
    target = walk(rest, subst)
    if isinstance(target, Rest):
        # bound rests compare as multisets
        for order in permutations(left):
            yield from _unify_seq(target.args, order, subst)
    else:
        yield from _unify(target, Rest(left), subst)


def _match_containment(pattern: Anytype, term: Term, subst: Substitution):
    positions = list(
        subterm_positions(term, include_crypto=pattern.include_crypto, strict=pattern.strict)
    )
    if len(pattern.slots) == 1:
        for _, sub in positions:
            yield from _unify(pattern.slots[0], sub, subst)
        return
    for chosen in permutations(positions, len(pattern.slots)):
        paths = [path for path, _ in chosen]
        if all(
            disjoint(paths[i], paths[j])
            for i in range(len(paths))
            for j in range(i + 1, len(paths))
        ):
            yield from _unify_seq(pattern.slots, tuple(sub for _, sub in chosen), subst)


def match_contains(slot: Term, candidate: Term, include_crypto: bool) -> list[Substitution]:
    """
    Match a single data slot against every position of ``candidate``.

    Returns one substitution per matching position, the candidate itself
    included. Without ``include_crypto`` crypto bodies are not entered.
    """
    pattern = Anytype((slot,), contains=True, include_crypto=include_crypto)
    return list(unify_all(pattern, candidate))
