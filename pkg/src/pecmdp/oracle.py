"""Possible-worlds semantics by exhaustive enumeration.

Ground truth for small domains. It works from the domain description
alone (dictionaries, no state codec or matrices), sharing only the
exact-match reading of c-proposition bodies with the compiler. It therefore
cross-checks the matrix algebra, not the matching rule.
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from typing import Optional

from .core import CapacityError, Domain, FluentState, ValidationError, entails
from .projection import ZERO_CONDITION, Query, ZeroConditionProbability

MAX_WORLDS = 1_000_000


@dataclass(frozen=True)
class World:
    """One branch of the domain's evolution.

    ``trace[t]`` is the fluent state holding at instant ``t`` and the set of
    actions performed there.
    """

    trace: tuple[tuple[FluentState, frozenset[str]], ...]
    weight: float

    def state_at(self, t: int) -> FluentState:
        return self.trace[t][0]


def _occurrence_probs(domain: Domain, label: str, state: Mapping[str, str]) -> list[tuple[str, float]]:
    out = []
    for action in domain.actions:
        p = 0.0
        for pp in domain.pprops:
            if pp.action == action and pp.instant == label and entails(state, pp.condition):
                p = pp.probability
                break
        out.append((action, p))
    return out


def _action_branches(domain: Domain, label: str, state: Mapping[str, str]) -> Iterator[tuple[frozenset[str], float]]:
    """Every set of performed actions with its independent-product weight."""
    branches: list[tuple[frozenset[str], float]] = [(frozenset(), 1.0)]
    for action, p in _occurrence_probs(domain, label, state):
        nxt = []
        for acts, w in branches:
            if p > 0.0:
                nxt.append((acts | {action}, w * p))
            if p < 1.0:
                nxt.append((acts, w * (1.0 - p)))
        branches = nxt
    return iter(branches)


def _effect(domain: Domain, state: Mapping[str, str], performed: frozenset[str]):
    for c in domain.cprops:
        if c.body_actions == performed and entails(state, c.body_conditions):
            return c
    return None


def enumerate_worlds(domain: Domain, max_worlds: int = MAX_WORLDS) -> list[World]:
    """Depth-first expansion over initial outcomes, action occurrences and
    effect outcomes. Zero-probability branches are not expanded."""
    horizon = len(domain.instants)
    if horizon == 0:
        raise ValidationError("domain has no instants")
    worlds: list[World] = []

    def expand(t: int, state: dict[str, str], trace: list, weight: float) -> None:
        label = domain.instants[t]
        frozen = FluentState(state)
        for performed, w in _action_branches(domain, label, state):
            w_here = weight * w
            here = trace + [(frozen, performed)]
            if t == horizon - 1:
                if len(worlds) >= max_worlds:
                    raise CapacityError(f"more than {max_worlds} worlds")
                worlds.append(World(tuple(here), w_here))
                continue
            c = _effect(domain, state, performed)
            if c is None:
                expand(t + 1, state, here, w_here)
                continue
            for outcome, p in c.outcomes:
                if p > 0.0:
                    expand(t + 1, {**state, **outcome}, here, w_here * p)

    for state, p in domain.iprop.outcomes:
        if p > 0.0:
            expand(0, dict(state), [], p)
    return worlds


def _holds(world: World, t: int, cond: Mapping[str, str]) -> bool:
    return entails(world.state_at(t), cond)


def oracle_project(domain: Domain, q: Query, worlds: Optional[list[World]] = None) -> float:
    """Sum of the weights of the worlds in which the query holds."""
    if worlds is None:
        worlds = enumerate_worlds(domain)
    index = {label: t for t, label in enumerate(domain.instants)}
    if q.target_time not in index:
        raise ValidationError(f"unknown instant {q.target_time!r}")
    tq = index[q.target_time]
    if not q.conditional:
        return math.fsum(w.weight for w in worlds if _holds(w, tq, q.target))
    if q.condition_time not in index:
        raise ValidationError(f"unknown instant {q.condition_time!r}")
    tc = index[q.condition_time]
    if tc > tq:
        raise ValidationError("condition instant comes after query instant")
    given = [w for w in worlds if _holds(w, tc, q.condition)]
    denom = math.fsum(w.weight for w in given)
    if denom < ZERO_CONDITION:
        raise ZeroConditionProbability(f"condition has probability {denom!r}")
    return math.fsum(w.weight for w in given if _holds(w, tq, q.target)) / denom


def marginals(domain: Domain, worlds: Optional[list[World]] = None) -> dict[tuple[int, str, str], float]:
    """``P(F=V @ t)`` for every fluent, value and step, from one pass over the worlds."""
    if worlds is None:
        worlds = enumerate_worlds(domain)
    acc: dict[tuple[int, str, str], list[float]] = {}
    for t in range(len(domain.instants)):
        for d in domain.fluents:
            for v in d.values:
                acc[(t, d.name, v)] = []
    for w in worlds:
        for t, (state, _) in enumerate(w.trace):
            for f, v in state.items():
                acc[(t, f, v)].append(w.weight)
    return {k: math.fsum(v) for k, v in acc.items()}


__all__ = ["World", "enumerate_worlds", "marginals", "oracle_project"]
