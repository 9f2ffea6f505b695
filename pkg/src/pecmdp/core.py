"""Domain AST for Probabilistic Event Calculus descriptions.

Everything here is immutable. Partial fluent states compare by content, so
two domains built from the same propositions in the same declaration order
are equal regardless of how their assignments were spelled.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .parser import SourceSpan

PROB_TOL = 1e-9


class PecError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PecError):
    def __init__(self, message: str, report: Optional["ValidationReport"] = None):
        super().__init__(message)
        self.report = report


class CapacityError(PecError):
    """A state space, situation set or world enumeration exceeds its cap."""


class PartialFluentState(Mapping[str, str]):
    """An immutable set of ``fluent=value`` assignments.

    Each fluent appears at most once. The empty state is valid and is
    entailed by every fluent state.
    """

    __slots__ = ("_data", "_hash")

    def __init__(self, assignments: Mapping[str, str] | Iterable[tuple[str, str]] = ()):
        pairs = assignments.items() if isinstance(assignments, Mapping) else assignments
        data: dict[str, str] = {}
        for fluent, value in pairs:
            if fluent in data:
                raise ValueError(f"fluent {fluent!r} assigned more than once")
            data[fluent] = value
        self._data = data
        self._hash: Optional[int] = None

    def __getitem__(self, fluent: str) -> str:
        return self._data[fluent]

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._data.items()))
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, PartialFluentState):
            return self._data == other._data
        if isinstance(other, Mapping):
            return self._data == dict(other.items())
        return NotImplemented

    def __repr__(self) -> str:
        inner = ", ".join(f"{f}={v}" for f, v in self._data.items())
        return f"{type(self).__name__}({{{inner}}})"

    def compatible(self, other: Mapping[str, str]) -> bool:
        """True when no fluent is assigned different values by the two states."""
        small, big = (self, other) if len(self) <= len(other) else (other, self)
        return all(big.get(f, v) == v for f, v in small.items())

    def union(self, other: Mapping[str, str]) -> "PartialFluentState":
        if not self.compatible(other):
            raise ValueError(f"{self!r} and {other!r} are incompatible")
        merged = dict(self._data)
        merged.update(other)
        return PartialFluentState(merged)

    def restrict(self, fluents: Iterable[str]) -> "PartialFluentState":
        return PartialFluentState((f, self._data[f]) for f in fluents)

    def ordered(self, fluent_order: Iterable[str]) -> list[tuple[str, str]]:
        """Assignments sorted by ``fluent_order``; unknown fluents go last."""
        rank = {f: i for i, f in enumerate(fluent_order)}
        return sorted(self._data.items(), key=lambda kv: (rank.get(kv[0], len(rank)), kv[0]))


class FluentState(PartialFluentState):
    """A partial fluent state that is total over its domain's fluents.

    Totality can only be checked against a domain; see
    :meth:`Domain.is_total`.
    """

    __slots__ = ()


EMPTY = PartialFluentState()


@dataclass(frozen=True)
class FluentDecl:
    name: str
    values: tuple[str, ...]
    span: Optional["SourceSpan"] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class IProposition:
    outcomes: tuple[tuple[FluentState, float], ...]
    span: Optional["SourceSpan"] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CProposition:
    """``body causes-one-of {(X_1, P_1), ...}``.

    The body is a conjunction of action assertions (``U = T``) and fluent
    literals; it is stored pre-split into its action set and its fluent
    precondition.
    """

    body_actions: frozenset[str]
    body_conditions: PartialFluentState
    outcomes: tuple[tuple[PartialFluentState, float], ...]
    span: Optional["SourceSpan"] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PProposition:
    action: str
    instant: str
    probability: float
    condition: PartialFluentState = EMPTY
    span: Optional["SourceSpan"] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Domain:
    fluents: tuple[FluentDecl, ...]
    actions: tuple[str, ...]
    instants: tuple[str, ...]
    iprop: IProposition
    cprops: tuple[CProposition, ...] = ()
    pprops: tuple[PProposition, ...] = ()

    @property
    def fluent_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fluents)

    def vals(self, fluent: str) -> tuple[str, ...]:
        for decl in self.fluents:
            if decl.name == fluent:
                return decl.values
        raise KeyError(fluent)

    def is_total(self, state: Mapping[str, str]) -> bool:
        return len(state) == len(self.fluents) and all(
            d.name in state and state[d.name] in d.values for d in self.fluents
        )

    def fluent_states(self) -> Iterator[FluentState]:
        """All total fluent states in lexicographic value-index order."""
        names = self.fluent_names
        for combo in itertools.product(*(d.values for d in self.fluents)):
            yield FluentState(zip(names, combo))

    def with_pprops(self, pprops: Iterable[PProposition]) -> "Domain":
        return Domain(self.fluents, self.actions, self.instants, self.iprop, self.cprops, tuple(pprops))


def entails(state: Mapping[str, str], cond: Mapping[str, str], domain: Optional[Domain] = None) -> bool:
    """True iff every assignment in ``cond`` appears in ``state``.

    Raises :class:`ValidationError` when ``cond`` names a fluent the state
    does not assign, or (given a domain) a value outside the fluent's range.
    """
    for fluent, value in cond.items():
        if fluent not in state:
            raise ValidationError(f"unknown fluent {fluent!r}")
        if domain is not None and value not in domain.vals(fluent):
            raise ValidationError(f"unknown value {value!r} for fluent {fluent!r}")
        if state[fluent] != value:
            return False
    return True


# Text forms shared by diagnostics and the renderer.

def format_state(state: Mapping[str, str], fluent_order: Iterable[str] = ()) -> str:
    items = state.ordered(fluent_order) if isinstance(state, PartialFluentState) else list(state.items())
    return "{" + ", ".join(f"{f}={v}" for f, v in items) + "}"


def format_prob(p: float) -> str:
    return repr(float(p))


def format_outcomes(outcomes, fluent_order: Iterable[str] = ()) -> str:
    order = tuple(fluent_order)
    return "{" + ", ".join(f"({format_state(x, order)}, {format_prob(p)})" for x, p in outcomes) + "}"


def format_body(cprop: CProposition, fluent_order: Iterable[str] = (), action_order: Iterable[str] = ()) -> str:
    rank = {a: i for i, a in enumerate(action_order)}
    acts = sorted(cprop.body_actions, key=lambda a: (rank.get(a, len(rank)), a))
    terms = acts + [f"{f}={v}" for f, v in cprop.body_conditions.ordered(fluent_order)]
    return " & ".join(terms)


def format_cprop(cprop: CProposition, fluent_order: Iterable[str] = (), action_order: Iterable[str] = ()) -> str:
    order = tuple(fluent_order)
    return f"{format_body(cprop, order, action_order)} causes-one-of {format_outcomes(cprop.outcomes, order)}"


def format_pprop(pprop: PProposition, fluent_order: Iterable[str] = ()) -> str:
    text = f"{pprop.action} performed-at {pprop.instant} with-prob {format_prob(pprop.probability)}"
    if pprop.condition:
        text += f" if-holds {format_state(pprop.condition, fluent_order)}"
    return text


# Validation

@dataclass(frozen=True, order=True)
class Violation:
    code: str
    message: str
    severity: str = "error"
    span: Optional["SourceSpan"] = field(default=None, compare=False)

    def __str__(self) -> str:
        where = f"{self.span.line}:{self.span.column}: " if self.span is not None else ""
        return f"{where}{self.severity}: {self.message} [{self.code}]"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def errors(self) -> tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.severity == "error")

    @property
    def warnings(self) -> tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.severity == "warning")

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_for_errors(self) -> None:
        if self.errors:
            lines = "\n".join(str(v) for v in self.errors)
            raise ValidationError(f"domain is not well formed:\n{lines}", self)

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


def _prob_sum_ok(probs: Iterable[float]) -> bool:
    return abs(math.fsum(probs) - 1.0) <= PROB_TOL


def _dupes(names: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for n in names:
        if n in seen and n not in out:
            out.append(n)
        seen.add(n)
    return out


def validate(domain: Domain) -> ValidationReport:
    """Check well-formedness; violations are collected, never raised.

    Overlapping p-propositions that agree on their probability are reported
    as warnings: they still define a single probability per
    (state, action, instant).
    """
    out: list[Violation] = []
    order = domain.fluent_names
    actions = domain.actions

    def add(code: str, message: str, span=None, severity: str = "error") -> None:
        out.append(Violation(code, message, severity, span))

    if not domain.fluents:
        add("no-fluents", "domain declares no fluents")
    if not domain.instants:
        add("no-instants", "domain declares no instants")
    for kind, names in (("fluent", order), ("action", actions), ("instant", domain.instants)):
        for name in _dupes(names):
            add("duplicate-name", f"{kind} {name!r} declared more than once")

    vals = {d.name: d.values for d in domain.fluents}
    for decl in domain.fluents:
        if len(decl.values) < 2:
            add("few-values", f"fluent {decl.name!r} must take at least two values", decl.span)
        for v in _dupes(decl.values):
            add("duplicate-value", f"fluent {decl.name!r} lists value {v!r} more than once", decl.span)

    def check_state(state: Mapping[str, str], where: str, span) -> bool:
        good = True
        for f, v in state.items():
            if f not in vals:
                add("undeclared-fluent", f"{where}: undeclared fluent {f!r}", span)
                good = False
            elif v not in vals[f]:
                add("undeclared-value", f"{where}: {v!r} is not a value of {f!r}", span)
                good = False
        return good

    def check_probs(outcomes, where: str, span) -> None:
        probs = [p for _, p in outcomes]
        for p in probs:
            if not (0.0 <= p <= 1.0):
                add("probability-range", f"{where}: probability {p!r} outside [0, 1]", span)
        if not _prob_sum_ok(probs):
            add("probability-sum", f"{where}: outcome probabilities sum to {math.fsum(probs)!r}, not 1", span)

    ip = domain.iprop
    where = "initially-one-of"
    if not ip.outcomes:
        add("empty-outcomes", f"{where}: no outcomes", ip.span)
    for state, _ in ip.outcomes:
        if check_state(state, where, ip.span) and not domain.is_total(state):
            add("partial-initial-state", f"{where}: {format_state(state, order)} is not a total fluent state", ip.span)
    for dup in _dupes([format_state(s, order) for s, _ in ip.outcomes]):
        add("duplicate-outcome", f"{where}: fluent state {dup} listed more than once", ip.span)
    if ip.outcomes:
        check_probs(ip.outcomes, where, ip.span)

    for c in domain.cprops:
        where = format_cprop(c, order, actions)
        if not c.body_actions:
            add("no-body-action", f"{where}: body must assert at least one action", c.span)
        for a in sorted(c.body_actions):
            if a not in actions:
                add("undeclared-action", f"{where}: undeclared action {a!r}", c.span)
        check_state(c.body_conditions, where, c.span)
        if not c.outcomes:
            add("empty-outcomes", f"{where}: no outcomes", c.span)
        for x, _ in c.outcomes:
            check_state(x, where, c.span)
        if c.outcomes:
            check_probs(c.outcomes, where, c.span)

    for c1, c2 in itertools.combinations(domain.cprops, 2):
        if c1.body_actions == c2.body_actions and c1.body_conditions.compatible(c2.body_conditions):
            a, b = sorted([format_body(c1, order, actions), format_body(c2, order, actions)])
            add("cprop-overlap", f"c-proposition bodies '{a}' and '{b}' can hold together", c2.span or c1.span)

    instants = set(domain.instants)
    for p in domain.pprops:
        where = format_pprop(p, order)
        if p.action not in actions:
            add("undeclared-action", f"{where}: undeclared action {p.action!r}", p.span)
        if p.instant not in instants:
            add("undeclared-instant", f"{where}: undeclared instant {p.instant!r}", p.span)
        if not (0.0 < p.probability <= 1.0):
            add("probability-range", f"{where}: probability {p.probability!r} outside (0, 1]", p.span)
        check_state(p.condition, where, p.span)

    for p1, p2 in itertools.combinations(domain.pprops, 2):
        if p1.action == p2.action and p1.instant == p2.instant and p1.condition.compatible(p2.condition):
            a, b = sorted([format_pprop(p1, order), format_pprop(p2, order)])
            if p1.probability == p2.probability:
                add("pprop-redundant", f"p-propositions '{a}' and '{b}' overlap", p2.span or p1.span, "warning")
            else:
                add("pprop-ambiguous", f"p-propositions '{a}' and '{b}' can hold together", p2.span or p1.span)

    return ValidationReport(tuple(sorted(set(out))))
